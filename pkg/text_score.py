# File: text_score.py

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import pandas as pd
from nltk.translate.bleu_score import SmoothingFunction, sentence_bleu
from rouge_score import rouge_scorer

from errors import ValidationError

logger = logging.getLogger(__name__)

TASK_VERBS = ("Cover", "Insert", "Move", "Pick", "Place", "Pour", "Press", "Pull", "Push", "Twist")
TASKS_PER_IMAGE = 5
CIDER_MAX_N = 4
CIDER_SCALE = 10.0
SEMANTIC_WEIGHT = 0.1

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)

Tokens = Union[str, Sequence[str]]


# ─── Tokenization ─────────────────────────────────────────────────────────────
def tokenize(text) -> list:
    """Lowercase; split on whitespace and punctuation."""
    if text is None or (isinstance(text, float) and math.isnan(text)):
        return []
    return _TOKEN_RE.findall(str(text).lower())


def _tokens(seq: Tokens) -> list:
    if isinstance(seq, str) or seq is None or isinstance(seq, float):
        return tokenize(seq)
    return [t.lower() for t in seq]


class _RougeTokenizer:
    def tokenize(self, text):
        return tokenize(text)


_ROUGE = rouge_scorer.RougeScorer(["rougeL"], tokenizer=_RougeTokenizer())
_SMOOTH = SmoothingFunction()


# ─── Types ────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class TaskSpec:
    verb: str
    instruction: str
    difficulty: int


@dataclass(frozen=True)
class CognitionDims:
    precision: float
    recall: float
    semantic: float

    def __post_init__(self):
        vals = (self.precision, self.recall, self.semantic)
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"🚨 Cognition dims must be finite, got {vals}")
        if not (0.0 <= self.precision <= 1.0 and 0.0 <= self.recall <= 1.0):
            raise ValidationError(f"🚨 Precision/recall must lie in [0, 1], got {vals}")
        if not 0.0 <= self.semantic <= CIDER_SCALE:
            raise ValidationError(f"🚨 Semantic score must lie in [0, 10], got {self.semantic}")


def parse_task(verb: str, instruction: str, difficulty) -> TaskSpec:
    match = [v for v in TASK_VERBS if v.lower() == str(verb).strip().lower()]
    if not match:
        raise ValidationError(f"🚨 Task verb {verb!r} outside the vocabulary {TASK_VERBS}")
    try:
        difficulty = int(difficulty)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"🚨 Task difficulty must be an integer, got {difficulty!r}") from e
    if not 1 <= difficulty <= TASKS_PER_IMAGE:
        raise ValidationError(f"🚨 Task difficulty must be 1..5, got {difficulty}")
    return TaskSpec(verb=match[0], instruction=str(instruction), difficulty=difficulty)


def validate_image_tasks(tasks: Sequence[TaskSpec]) -> list:
    if len(tasks) != TASKS_PER_IMAGE:
        raise ValidationError(f"🚨 Each image needs exactly 5 tasks, got {len(tasks)}")
    ranks = sorted(t.difficulty for t in tasks)
    if ranks != list(range(1, TASKS_PER_IMAGE + 1)):
        raise ValidationError(f"🚨 Task difficulties must rank 1..5 once each, got {ranks}")
    return sorted(tasks, key=lambda t: t.difficulty)


# ─── Metrics ──────────────────────────────────────────────────────────────────
def bleu(candidate: Tokens, reference: Tokens) -> float:
    """Sentence BLEU-4 with brevity penalty; add-epsilon smoothing on empty n-gram matches."""
    cand, ref = _tokens(candidate), _tokens(reference)
    if not ref:
        raise ValidationError("🚨 BLEU reference must be non-empty")
    if not cand:
        return 0.0
    return float(sentence_bleu([ref], cand, smoothing_function=_SMOOTH.method1, auto_reweigh=True))


def rouge(candidate: Tokens, reference: Tokens) -> float:
    """ROUGE-L F1."""
    cand, ref = _tokens(candidate), _tokens(reference)
    if not ref:
        raise ValidationError("🚨 ROUGE reference must be non-empty")
    if not cand:
        return 0.0
    return float(_ROUGE.score(" ".join(ref), " ".join(cand))["rougeL"].fmeasure)


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class IdfTable:
    doc_freq: dict
    n_docs: int

    def idf(self, gram: tuple) -> float:
        return math.log(self.n_docs / max(1, self.doc_freq.get(gram, 0)))


def build_idf(corpus: Sequence[Tokens]) -> IdfTable:
    """Document frequencies of 1..4-grams over the reference outputs of a run."""
    if not corpus:
        raise ValidationError("🚨 CIDEr IDF corpus must be non-empty")
    df = Counter()
    for sentence in corpus:
        toks = _tokens(sentence)
        grams = set()
        for n in range(1, CIDER_MAX_N + 1):
            grams |= set(_ngrams(toks, n))
        df.update(grams)
    return IdfTable(doc_freq=dict(df), n_docs=len(corpus))


def _order_similarity(cand: Counter, ref: Counter, idf: IdfTable) -> float:
    vc = {g: c * idf.idf(g) for g, c in cand.items()}
    vr = {g: c * idf.idf(g) for g, c in ref.items()}
    norm_c = math.sqrt(sum(v * v for v in vc.values()))
    norm_r = math.sqrt(sum(v * v for v in vr.values()))
    if norm_c == 0.0 or norm_r == 0.0:
        # every shared gram sits in every corpus document: only exact agreement counts
        return 1.0 if (norm_c == norm_r and cand and cand == ref) else 0.0
    dot = sum(v * vr.get(g, 0.0) for g, v in vc.items())
    return dot / (norm_c * norm_r)


def cider(candidate: Tokens, reference: Tokens, idf_corpus) -> float:
    """
    TF-IDF n-gram cosine averaged over orders 1..min(4, len(reference)), ×10,
    clipped to [0, 10]. idf_corpus is a list of sentences or a prebuilt IdfTable.
    """
    idf = idf_corpus if isinstance(idf_corpus, IdfTable) else build_idf(idf_corpus)
    cand, ref = _tokens(candidate), _tokens(reference)
    if not cand or not ref:
        return 0.0
    orders = range(1, min(CIDER_MAX_N, len(ref)) + 1)
    sims = [_order_similarity(_ngrams(cand, n), _ngrams(ref, n), idf) for n in orders]
    return float(np.clip(CIDER_SCALE * np.mean(sims), 0.0, CIDER_SCALE))


# ─── Scores ───────────────────────────────────────────────────────────────────
def cognition_task_score(dims: CognitionDims) -> float:
    """(precision + recall + 0.1·semantic) / 3; identity outputs score exactly 1."""
    if not isinstance(dims, CognitionDims):
        dims = CognitionDims(*dims)
    return (dims.precision + dims.recall + SEMANTIC_WEIGHT * dims.semantic) / 3.0


def cognition_image_score(task_scores: Sequence[float]) -> float:
    scores = np.asarray(task_scores, dtype=float)
    if scores.shape != (TASKS_PER_IMAGE,):
        raise ValidationError(f"🚨 Cognition image score needs exactly 5 task scores, got {scores.shape}")
    if not np.all(np.isfinite(scores)) or scores.min() < 0.0 or scores.max() > 1.0:
        raise ValidationError(f"🚨 Task scores must lie in [0, 1], got {scores.tolist()}")
    return float(scores.sum())


# ─── Batch scoring ────────────────────────────────────────────────────────────
def score_text_outputs(outputs: pd.DataFrame, manifest: pd.DataFrame) -> pd.DataFrame:
    """
    Score distorted-image outputs against the same model's output on the reference.
    Rows whose image_id is a manifest ref_id are reference outputs; rows whose
    image_id is a manifest image_id are distorted outputs. Orphans are reported.
    """
    # 1) ENSURE columns
    needed = {"image_id", "model_id", "task_index", "text"}
    if not needed <= set(outputs.columns):
        raise ValidationError(f"🚨 Text outputs need columns {sorted(needed)}, got {outputs.columns.tolist()}")
    out = outputs.copy()
    out["image_id"] = out["image_id"].astype(str)
    out["model_id"] = out["model_id"].astype(str)
    out["task_index"] = out["task_index"].astype(int)
    out["text"] = out["text"].fillna("").astype(str)

    # 2) SPLIT reference vs distorted rows
    ref_ids = set(manifest["ref_id"].astype(str))
    dist_map = manifest.set_index("image_id")["ref_id"].astype(str).to_dict()
    refs = out[out["image_id"].isin(ref_ids)]
    dists = out[out["image_id"].isin(dist_map)].copy()
    orphans = out[~out["image_id"].isin(ref_ids | set(dist_map))]
    if not orphans.empty:
        logger.warning(f"{len(orphans):,} text rows reference unknown images, e.g. {orphans['image_id'].iloc[0]!r}")

    # 3) IDF over all reference outputs of the run
    idf = build_idf(refs["text"].tolist())
    logger.info(f"Built CIDEr IDF over {idf.n_docs:,} reference outputs")

    # 4) PAIR each distorted output with its reference output
    dists["ref_id"] = dists["image_id"].map(dist_map)
    paired = dists.merge(
        refs.rename(columns={"image_id": "ref_id", "text": "ref_text"})[["ref_id", "model_id", "task_index", "ref_text"]],
        on=["ref_id", "model_id", "task_index"],
        how="left",
    )
    unmatched = paired["ref_text"].isna()
    if unmatched.any():
        logger.warning(f"{int(unmatched.sum()):,} distorted outputs have no reference output; skipped")
    paired = paired[~unmatched]

    recs = []
    for row in paired.itertuples(index=False):
        if not tokenize(row.ref_text):
            logger.warning(f"Empty reference output for {row.ref_id}/{row.model_id}/task {row.task_index}; skipped")
            continue
        dims = CognitionDims(
            precision=bleu(row.text, row.ref_text),
            recall=rouge(row.text, row.ref_text),
            semantic=cider(row.text, row.ref_text, idf),
        )
        recs.append({
            "image_id": row.image_id, "model_id": row.model_id, "task_index": row.task_index,
            "precision": dims.precision, "recall": dims.recall, "semantic": dims.semantic,
            "task_score": cognition_task_score(dims),
        })
    scores = pd.DataFrame(recs, columns=["image_id", "model_id", "task_index", "precision",
                                         "recall", "semantic", "task_score"])
    return attach_image_score(scores, cognition_image_score)


def attach_image_score(scores: pd.DataFrame, image_score_fn) -> pd.DataFrame:
    scores = scores.sort_values(["image_id", "model_id", "task_index"]).reset_index(drop=True)

    def total(grp):
        try:
            return image_score_fn(grp.to_numpy())
        except ValidationError as e:
            logger.warning(f"Incomplete task set: {e}")
            return np.nan

    totals = scores.groupby(["image_id", "model_id"])["task_score"].agg(total).rename("image_score")
    scores = scores.merge(totals.reset_index(), on=["image_id", "model_id"], how="left")
    logger.info(f"Scored {len(scores):,} task rows over {len(totals):,} image/model pairs")
    return scores

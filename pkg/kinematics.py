# File: kinematics.py

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from errors import ValidationError
from pose_score import parse_pose

logger = logging.getLogger(__name__)

SINGULAR_SHOULDER = 1e-12
SINGULAR_ELBOW = 1e-8
SINGULAR_WRIST = 1e-8
REACH_TOL = 1e-9
ELBOW_SNAP = 1e-13
RESIDUAL_TOL = 1e-6
ORTHO_TOL = 1e-6


# ──────────────────────────────────────────────────────────────────────────────
# D-H TABLE (modified convention: α_{i-1}, a_{i-1}, d_i, θ_i)
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class DHRow:
    alpha_prev: float
    a_prev: float
    d: float
    theta_home: float = 0.0

    def __post_init__(self):
        vals = (self.alpha_prev, self.a_prev, self.d, self.theta_home)
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"🚨 D-H row has non-finite entries: {vals}")
        if abs(self.a_prev) >= 2.0 or abs(self.d) >= 2.0:
            raise ValidationError(f"🚨 D-H row outside physical range |a|,|d| < 2 m: {vals}")


@dataclass(frozen=True)
class DHTable:
    rows: tuple

    def __post_init__(self):
        if len(self.rows) != 6:
            raise ValidationError(f"🚨 D-H table needs exactly 6 rows, got {len(self.rows)}")

    @classmethod
    def ur5(cls, d1=0.089159, a2=0.425, a3=0.39225, d4=0.10915, d5=0.09465, d6=0.0823,
            negate_a: bool = False) -> "DHTable":
        if negate_a:
            a2, a3 = -a2, -a3
        half_pi = np.pi / 2
        return cls(rows=(
            DHRow(0.0, 0.0, d1),
            DHRow(half_pi, 0.0, 0.0),
            DHRow(0.0, a2, 0.0),
            DHRow(0.0, a3, d4),
            DHRow(half_pi, 0.0, d5),
            DHRow(-half_pi, 0.0, d6),
        ))

    @classmethod
    def from_settings(cls, settings) -> "DHTable":
        dh = settings.dh
        return cls.ur5(dh["DH_D1"], dh["DH_A2"], dh["DH_A3"], dh["DH_D4"],
                       dh["DH_D5"], dh["DH_D6"], negate_a=settings.dh_negate_a)

    # named constants of the UR layout
    d1 = property(lambda self: self.rows[0].d)
    a2 = property(lambda self: self.rows[2].a_prev)
    a3 = property(lambda self: self.rows[3].a_prev)
    d4 = property(lambda self: self.rows[3].d)
    d5 = property(lambda self: self.rows[4].d)
    d6 = property(lambda self: self.rows[5].d)

    @property
    def theta_home(self) -> np.ndarray:
        return np.array([r.theta_home for r in self.rows])

    def check_ur_layout(self):
        """The closed-form IK assumes the UR joint layout; reject anything else."""
        half_pi = np.pi / 2
        alphas = np.array([r.alpha_prev for r in self.rows])
        a_prev = np.array([r.a_prev for r in self.rows])
        d = np.array([r.d for r in self.rows])
        ok = (
            np.allclose(alphas, [0, half_pi, 0, 0, half_pi, -half_pi], atol=1e-12)
            and np.allclose(a_prev[[0, 1, 4, 5]], 0.0, atol=1e-12)
            and np.allclose(d[[1, 2]], 0.0, atol=1e-12)
            and abs(self.a2) > 0 and abs(self.a3) > 0
        )
        if not ok:
            raise ValidationError("🚨 D-H table does not follow the UR joint layout; analytic IK unavailable")


# ──────────────────────────────────────────────────────────────────────────────
# TYPES
# ──────────────────────────────────────────────────────────────────────────────
class Singularity(str, Enum):
    NONE = "None"
    SHOULDER = "Shoulder"
    ELBOW = "Elbow"
    WRIST = "Wrist"


@dataclass
class IKSolutionSet:
    solutions: list = field(default_factory=list)
    branches: list = field(default_factory=list)
    singular: list = field(default_factory=list)
    singularity: Singularity = Singularity.NONE
    reason: Optional[str] = None

    def __len__(self):
        return len(self.solutions)


class OutcomeKind(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    EMERGENCY_STOP = "EmergencyStop"


@dataclass(frozen=True)
class ExecutionOutcome:
    kind: OutcomeKind
    final_pose_ref: Optional[tuple] = None
    final_pose_dist: Optional[tuple] = None


# ──────────────────────────────────────────────────────────────────────────────
# HELPERS
# ──────────────────────────────────────────────────────────────────────────────
def wrap_angle(theta):
    """Wrap to (−π, π]."""
    w = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(w <= -np.pi, np.pi, w)


def _rot_z(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _link(alpha: float, a: float, d: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct,      -st,      0.0,  a],
        [st * ca,  ct * ca, -sa, -sa * d],
        [st * sa,  ct * sa,  ca,  ca * d],
        [0.0,      0.0,     0.0,  1.0],
    ])


def _chain(table: DHTable, eff: Sequence[float], upto: int = 6) -> np.ndarray:
    T = np.eye(4)
    for row, th in zip(table.rows[:upto], eff[:upto]):
        T = T @ _link(row.alpha_prev, row.a_prev, row.d, th)
    return T


def check_transform(T, tol: float = ORTHO_TOL) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4) or not np.all(np.isfinite(T)):
        raise ValidationError(f"🚨 Expected a finite 4×4 transform, got shape {T.shape}")
    R = T[:3, :3]
    ortho = np.linalg.norm(R.T @ R - np.eye(3))
    if ortho > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValidationError(f"🚨 Transform rotation is not orthonormal (residual {ortho:.2e})")
    return T


def fk_residual(T_a: np.ndarray, T_b: np.ndarray) -> tuple:
    """(position residual in m, rotation Frobenius residual)."""
    return (float(np.linalg.norm(T_a[:3, 3] - T_b[:3, 3])),
            float(np.linalg.norm(T_a[:3, :3] - T_b[:3, :3])))


# ──────────────────────────────────────────────────────────────────────────────
# FORWARD KINEMATICS
# ──────────────────────────────────────────────────────────────────────────────
def dh_transform(row: DHRow, theta: float) -> np.ndarray:
    """Single-link matrix A_i^{i-1} = RotX(α_{i-1})·TransX(a_{i-1})·RotZ(θ_i)·TransZ(d_i)."""
    return _link(row.alpha_prev, row.a_prev, row.d, theta + row.theta_home)


def forward_kinematics(joints: Sequence[float], table: DHTable = None) -> np.ndarray:
    table = table or DHTable.ur5()
    q = np.asarray(joints, dtype=float)
    if q.shape != (6,) or not np.all(np.isfinite(q)):
        raise ValidationError(f"🚨 Joint vector must hold 6 finite angles, got {q!r}")
    T = np.eye(4)
    for row, th in zip(table.rows, q):
        T = T @ dh_transform(row, th)
    return T


def wrist_center(target: np.ndarray, d6: float) -> np.ndarray:
    """Back off from the flange along the approach vector: p − d6·a."""
    T = np.asarray(target, dtype=float)
    return T[:3, 3] - d6 * T[:3, 2]


def frame_origin(joints: Sequence[float], table: DHTable, frame: int) -> np.ndarray:
    eff = np.asarray(joints, dtype=float) + table.theta_home
    return _chain(table, eff, upto=frame)[:3, 3]


# ──────────────────────────────────────────────────────────────────────────────
# INVERSE KINEMATICS
# ──────────────────────────────────────────────────────────────────────────────
def _planar_23(X: float, Z: float, a2: float, a3: float, sigma3: int):
    """Solve X + iZ = e^{iθ2}(a2 + a3·e^{iθ3}); None when the elbow cannot reach."""
    c3 = (X * X + Z * Z - a2 * a2 - a3 * a3) / (2.0 * a2 * a3)
    if abs(c3) > 1.0 + REACH_TOL:
        return None
    if abs(c3) > 1.0 - ELBOW_SNAP:
        c3, s3 = float(np.sign(c3)), 0.0
    else:
        s3 = sigma3 * np.sqrt(1.0 - c3 * c3)
    t3 = np.arctan2(s3, c3)
    t2 = np.arctan2(Z, X) - np.arctan2(a3 * s3, a2 + a3 * c3)
    return t2, t3, abs(s3) < SINGULAR_ELBOW


def _wrist_arm(P: np.ndarray, a2: float, a3: float, d5: float) -> list:
    """
    (θ2, θ3, θ2+θ3+θ4, σ3) candidates when s5 = 0. Only θ2+θ3+θ4 ± θ6 reaches the
    orientation, so θ4 = 0 is tried first; when that leaves the wrist out of reach,
    θ2+θ3+θ4 is picked to put the elbow mid-range instead.
    """
    rho = np.hypot(P[0], P[2])
    gamma = np.arctan2(P[2], P[0])
    L = np.hypot(a3, d5)
    if rho > 1e-12:
        kappa = (rho * rho + L * L - a2 * a2) / (2.0 * rho * L)
        if abs(kappa) <= 1.0 + REACH_TOL:
            beta = np.arctan2(-d5, a3)
            out = []
            for sigma3 in (1, -1):
                t23 = gamma - beta + sigma3 * np.arccos(np.clip(kappa, -1.0, 1.0))
                v = P[[0, 2]] - np.array([a3 * np.cos(t23) + d5 * np.sin(t23),
                                          a3 * np.sin(t23) - d5 * np.cos(t23)])
                t2 = np.arctan2(v[1] / a2, v[0] / a2)
                out.append((t2, t23 - t2, t23, sigma3))
            return out

    # |wrist − d5 offset|² = ρ² + d5² + 2·d5·ρ·sin(γ − θ234); aim it at a2² + a3²
    ratio = (a2 * a2 + a3 * a3 - rho * rho - d5 * d5) / (2.0 * d5 * rho) if rho * d5 > 1e-12 else 0.0
    t234 = gamma - np.arcsin(np.clip(ratio, -1.0, 1.0))
    X = P[0] - d5 * np.sin(t234)
    Z = P[2] + d5 * np.cos(t234)
    out = []
    for sigma3 in (1, -1):
        planar = _planar_23(X, Z, a2, a3, sigma3)
        if planar is None:
            return []
        out.append((planar[0], planar[1], t234, sigma3))
    return out


def inverse_kinematics(target: np.ndarray, table: DHTable = None) -> IKSolutionSet:
    """
    Closed-form UR IK over the (σ1, σ3, σ5) branches.

    θ1 from the wrist center's offset d4 to the base axis; θ5 from the approach
    vector seen in frame 1 (atan2 of hypot/cos parts); θ6 from the second row
    of R_1^6; θ2, θ3 from the planar two-link problem once the d5 offset is
    removed; θ4 closes the sum θ2+θ3+θ4. When s5 vanishes the σ5 branches merge
    and θ6 is read from what is left of the rotation after frame 5. Every
    candidate is checked by FK before it is returned. Sets with fewer than 8
    solutions carry a singularity flag, a reason, or both.
    """
    table = table or DHTable.ur5()
    table.check_ur_layout()
    T = check_transform(target)
    R, p = T[:3, :3], T[:3, 3]
    d1, a2, a3, d4, d5, d6 = table.d1, table.a2, table.a3, table.d4, table.d5, table.d6
    home = table.theta_home

    result = IKSolutionSet()
    flags = set()

    p5 = wrist_center(T, d6)
    r2 = p5[0] ** 2 + p5[1] ** 2
    radicand = r2 - d4 * d4
    if radicand < -SINGULAR_SHOULDER:
        result.reason = "shoulder unreachable"
        logger.debug(f"IK: shoulder radicand {radicand:.3e} < 0")
        return result
    sigma1_set = (1, -1)
    if radicand < SINGULAR_SHOULDER:
        radicand = 0.0
        sigma1_set = (1,)
        flags.add(Singularity.SHOULDER)

    elbow_fail = attempts = 0
    unreachable = rejected = 0
    phi = np.arctan2(p5[1], p5[0])
    for sigma1 in sigma1_set:
        t1 = phi + np.arctan2(d4, sigma1 * np.sqrt(radicand))
        c1, s1 = np.cos(t1), np.sin(t1)
        R16 = _rot_z(t1).T @ R
        P = _rot_z(t1).T @ p5 - np.array([0.0, 0.0, d1])

        c5 = s1 * R[0, 2] - c1 * R[1, 2]
        s5_abs = np.hypot(R16[0, 2], R16[2, 2])

        if s5_abs < SINGULAR_WRIST:
            flags.add(Singularity.WRIST)
            t5 = 0.0 if c5 > 0 else np.pi
            attempts += 1
            arm = _wrist_arm(P, a2, a3, d5)
            if not arm:
                elbow_fail += 1
                unreachable += 4
                continue
            for t2, t3, t234, sigma3 in arm:
                eff = np.array([t1, t2, t3, t234 - t2 - t3, t5, 0.0])
                R05 = _chain(table, eff, upto=5)[:3, :3]
                Q = _rot_x(np.pi / 2) @ (R05.T @ R)
                eff[5] = np.arctan2(Q[1, 0], Q[0, 0])
                if not _accept(result, T, table, eff - home, (sigma1, sigma3, 1), Singularity.WRIST):
                    rejected += 1
            continue

        for sigma5 in (1, -1):
            s5 = sigma5 * s5_abs
            t5 = np.arctan2(s5, c5)
            t6 = np.arctan2((-s1 * R[0, 1] + c1 * R[1, 1]) / s5,
                            (s1 * R[0, 0] - c1 * R[1, 0]) / s5)
            R46 = _rot_x(np.pi / 2) @ _rot_z(t5) @ _rot_x(-np.pi / 2) @ _rot_z(t6)
            R14 = R16 @ R46.T
            t234 = np.arctan2(R14[2, 0], R14[0, 0])
            X = P[0] - d5 * np.sin(t234)
            Z = P[2] + d5 * np.cos(t234)
            for sigma3 in (1, -1):
                attempts += 1
                planar = _planar_23(X, Z, a2, a3, sigma3)
                if planar is None:
                    elbow_fail += 1
                    unreachable += 2
                    break
                t2, t3, elbow_singular = planar
                kind = Singularity.NONE
                if elbow_singular:
                    flags.add(Singularity.ELBOW)
                    kind = Singularity.ELBOW
                eff = np.array([t1, t2, t3, t234 - t2 - t3, t5, t6])
                if not _accept(result, T, table, eff - home, (sigma1, sigma3, sigma5), kind):
                    rejected += 1
                if elbow_singular:
                    break

    for flag in (Singularity.SHOULDER, Singularity.ELBOW, Singularity.WRIST):
        if flag in flags:
            result.singularity = flag
            break
    if not result.solutions:
        if elbow_fail and elbow_fail >= attempts:
            result.reason = "elbow unreachable"
        else:
            result.reason = "no candidate passed the FK residual check"
    elif len(result) < 8:
        notes = []
        if result.singularity is not Singularity.NONE:
            notes.append(f"{result.singularity.value.lower()} singularity merges branches")
        if unreachable:
            notes.append(f"elbow unreachable on {unreachable} of 8 branches")
        if rejected:
            notes.append(f"{rejected} of 8 branches failed the FK residual check")
        result.reason = "; ".join(notes) or f"{8 - len(result)} of 8 branches missing"
    logger.debug(f"IK: {len(result)} solutions, singularity={result.singularity.value}")
    return result


def _accept(result: IKSolutionSet, target: np.ndarray, table: DHTable, q: np.ndarray,
            branch: tuple, kind: Singularity) -> bool:
    q = wrap_angle(q)
    pos_res, rot_res = fk_residual(forward_kinematics(q, table), target)
    if pos_res >= RESIDUAL_TOL or rot_res >= RESIDUAL_TOL:
        logger.debug(f"IK: branch {branch} rejected (residual {pos_res:.2e} m, {rot_res:.2e})")
        return False
    result.solutions.append(q)
    result.branches.append(branch)
    result.singular.append(kind)
    return True


# ──────────────────────────────────────────────────────────────────────────────
# STEP-POSE COMPOSITION
# ──────────────────────────────────────────────────────────────────────────────
def compose_pose(initial: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return np.asarray(initial, dtype=float) @ np.asarray(delta, dtype=float)


def pose7_to_transform(pose) -> np.ndarray:
    """Pose7 (mm, rotation vector in rad) → 4×4 transform in metres."""
    T = np.eye(4)
    T[:3, :3] = Rotation.from_rotvec(np.asarray(pose.rotation, dtype=float)).as_matrix()
    T[:3, 3] = np.asarray(pose.position, dtype=float) / 1000.0
    return T


def accumulate_trajectory(initial: np.ndarray, deltas: Sequence[np.ndarray]) -> list:
    poses = []
    current = np.asarray(initial, dtype=float)
    for delta in deltas:
        current = compose_pose(current, delta)
        poses.append(current)
    return poses


def select_nearest_solution(solutions: IKSolutionSet, current: Sequence[float]) -> Optional[np.ndarray]:
    if not solutions.solutions:
        return None
    current = np.asarray(current, dtype=float)
    dists = [np.linalg.norm(wrap_angle(q - current)) for q in solutions.solutions]
    return solutions.solutions[int(np.argmin(dists))]


def track_trajectory(initial_joints: Sequence[float], deltas: Sequence[np.ndarray],
                     table: DHTable = None) -> list:
    """Per-step joints following the composed poses; None where a step is unreachable."""
    table = table or DHTable.ur5()
    current = np.asarray(initial_joints, dtype=float)
    steps = []
    for pose in accumulate_trajectory(forward_kinematics(current, table), deltas):
        q = select_nearest_solution(inverse_kinematics(pose, table), current)
        steps.append(q)
        if q is not None:
            current = q
    unreachable = sum(q is None for q in steps)
    if unreachable:
        logger.warning(f"Trajectory: {unreachable} of {len(steps)} steps unreachable")
    return steps


def final_position(initial_joints: Sequence[float], deltas: Sequence[np.ndarray],
                   table: DHTable = None) -> np.ndarray:
    table = table or DHTable.ur5()
    start = forward_kinematics(initial_joints, table)
    poses = accumulate_trajectory(start, deltas)
    return (poses[-1] if poses else start)[:3, 3].copy()


# ──────────────────────────────────────────────────────────────────────────────
# EXECUTION RUBRIC
# ──────────────────────────────────────────────────────────────────────────────
def execution_score(outcome: ExecutionOutcome) -> float:
    kind = OutcomeKind(outcome.kind)
    if kind is OutcomeKind.SUCCESS:
        return 100.0
    if kind is OutcomeKind.EMERGENCY_STOP:
        return 0.0
    if outcome.final_pose_ref is None or outcome.final_pose_dist is None:
        raise ValidationError("🚨 Failure outcome requires both final end-effector positions")
    ref = np.asarray(outcome.final_pose_ref, dtype=float)
    dist = np.asarray(outcome.final_pose_dist, dtype=float)
    if ref.shape != (3,) or dist.shape != (3,) or not np.all(np.isfinite([*ref, *dist])):
        raise ValidationError("🚨 Final positions must be finite 3-vectors (m)")
    d_cm = float(np.linalg.norm(ref - dist)) * 100.0
    return max(0.0, 100.0 - d_cm)


# ──────────────────────────────────────────────────────────────────────────────
# BATCH INGESTION
# ──────────────────────────────────────────────────────────────────────────────
def _xyz(raw) -> Optional[tuple]:
    if raw is None or (isinstance(raw, float) and np.isnan(raw)) or str(raw).strip() == "":
        return None
    parts = [p for p in str(raw).replace(",", " ").replace(";", " ").strip("[]() ").split() if p]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as e:
        raise ValidationError(f"🚨 Final position {raw!r} is not numeric") from e
    if len(vals) != 3:
        raise ValidationError(f"🚨 Final position needs 3 components, got {raw!r}")
    return vals


def format_xyz(vals) -> str:
    return "" if vals is None else ";".join(f"{v:.6f}" for v in vals)


def step_transform(step) -> np.ndarray:
    """A trajectory step: 16 numbers (row-major 4×4) or a 7-field pose delta."""
    vals = list(step)
    if len(vals) == 16:
        return check_transform(np.asarray(vals, dtype=float).reshape(4, 4))
    return pose7_to_transform(parse_pose(vals))


def score_execution_outcomes(outcomes, trajectories=None, table: DHTable = None,
                             home_joints: Sequence[float] = None):
    """
    Execution score per outcome row. Failure rows lacking final positions take
    them from composed trajectories ({image_id, variant: ref|dist, steps}).
    """
    table = table or DHTable.ur5()
    home = np.asarray(home_joints if home_joints is not None else np.zeros(6), dtype=float)
    if not {"image_id", "kind"} <= set(outcomes.columns):
        raise ValidationError("🚨 Execution outcomes need 'image_id' and 'kind' columns")

    finals = {}
    if trajectories is not None and not trajectories.empty:
        for row in trajectories.itertuples(index=False):
            deltas = [step_transform(s) for s in row.steps]
            finals[(str(row.image_id), str(row.variant))] = tuple(final_position(home, deltas, table))
        logger.info(f"Composed {len(finals):,} trajectories from the home pose")

    recs = []
    for row in outcomes.to_dict("records"):
        image_id = str(row["image_id"])
        try:
            kind = OutcomeKind(str(row["kind"]).strip())
        except ValueError as e:
            raise ValidationError(f"🚨 Outcome kind {row['kind']!r} for {image_id} not in "
                                  f"{[k.value for k in OutcomeKind]}") from e
        ref_xyz = _xyz(row.get("ref_final_xyz")) or finals.get((image_id, "ref"))
        dist_xyz = _xyz(row.get("dist_final_xyz")) or finals.get((image_id, "dist"))
        try:
            score, error = execution_score(ExecutionOutcome(kind, ref_xyz, dist_xyz)), None
        except ValidationError as e:
            logger.warning(f"Outcome {image_id}: {e}")
            score, error = np.nan, str(e)
        recs.append({
            "image_id": image_id,
            "model_id": "robot" if pd.isna(row.get("model_id")) else str(row["model_id"]),
            "kind": kind.value,
            "ref_final_xyz": format_xyz(ref_xyz),
            "dist_final_xyz": format_xyz(dist_xyz),
            "score": score,
            "error": error,
        })
    logger.info(f"Scored {len(recs):,} execution outcomes")
    return pd.DataFrame(recs, columns=["image_id", "model_id", "kind", "ref_final_xyz",
                                       "dist_final_xyz", "score", "error"])

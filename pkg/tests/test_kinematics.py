# File: tests/test_kinematics.py

import numpy as np
import pandas as pd
import pytest

from errors import ValidationError
from kinematics import (
    DHRow, DHTable, ExecutionOutcome, OutcomeKind, Singularity, accumulate_trajectory, compose_pose,
    dh_transform, execution_score, final_position, forward_kinematics, frame_origin, inverse_kinematics,
    pose7_to_transform, score_execution_outcomes, select_nearest_solution, track_trajectory, wrap_angle,
    wrist_center,
)
from pose_score import parse_pose

TABLE = DHTable.ur5()


def _well_conditioned(q, table=TABLE) -> bool:
    """All 8 branches exist and stay clear of every singularity."""
    T = forward_kinematics(q, table)
    p5 = wrist_center(T, table.d6)
    r2 = p5[0] ** 2 + p5[1] ** 2
    if r2 - table.d4 ** 2 < 0.05 ** 2:
        return False
    reach = np.sqrt(r2 - table.d4 ** 2 + (p5[2] - table.d1) ** 2)
    lo = abs(table.a2 - table.a3) + table.d5 + 0.02
    hi = table.a2 + table.a3 - table.d5 - 0.02
    if not lo < reach < hi:
        return False
    phi = np.arctan2(p5[1], p5[0])
    for sigma in (1, -1):
        t1 = phi + np.arctan2(table.d4, sigma * np.sqrt(r2 - table.d4 ** 2))
        c5 = np.sin(t1) * T[0, 2] - np.cos(t1) * T[1, 2]
        if abs(c5) >= 0.99:
            return False
    return True


def _random_joints(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        q = rng.uniform(-np.pi, np.pi, 6)
        if _well_conditioned(q):
            out.append(q)
    return out


# ─── Forward kinematics ───────────────────────────────────────────────────────
def test_link_matrix_matches_modified_convention():
    row = DHRow(alpha_prev=np.pi / 2, a_prev=0.3, d=0.1)
    theta = 0.4
    ca, sa, ct, st = 0.0, 1.0, np.cos(theta), np.sin(theta)
    rot_x = np.array([[1, 0, 0, 0], [0, ca, -sa, 0], [0, sa, ca, 0], [0, 0, 0, 1]])
    trans_x = np.eye(4)
    trans_x[0, 3] = 0.3
    rot_z = np.array([[ct, -st, 0, 0], [st, ct, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    trans_z = np.eye(4)
    trans_z[2, 3] = 0.1
    expected = rot_x @ trans_x @ rot_z @ trans_z
    assert np.allclose(dh_transform(row, theta), expected, atol=1e-12)


def test_forward_kinematics_is_chain_product():
    q = np.array([0.1, -0.7, 1.1, 0.3, -0.5, 0.9])
    expected = np.eye(4)
    for row, th in zip(TABLE.rows, q):
        expected = expected @ dh_transform(row, th)
    T = forward_kinematics(q)
    assert np.allclose(T, expected, atol=1e-12)
    assert np.allclose(T[:3, :3].T @ T[:3, :3], np.eye(3), atol=1e-12)


def test_zero_pose_flange_position():
    T = forward_kinematics(np.zeros(6))
    # arm stretched along +x at shoulder height, flange pointing along -y
    assert T[0, 3] == pytest.approx(TABLE.a2 + TABLE.a3, abs=1e-12)
    assert T[1, 3] == pytest.approx(-TABLE.d4 - TABLE.d6, abs=1e-12)
    assert T[2, 3] == pytest.approx(TABLE.d1 - TABLE.d5, abs=1e-12)


def test_forward_kinematics_rejects_bad_joint_vector():
    with pytest.raises(ValidationError):
        forward_kinematics([0.0] * 5)
    with pytest.raises(ValidationError):
        forward_kinematics([0.0, np.nan, 0.0, 0.0, 0.0, 0.0])


def test_dh_row_rejects_unphysical_lengths():
    with pytest.raises(ValidationError):
        DHRow(0.0, 2.5, 0.0)


def test_wrist_center_is_frame_five_origin():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        q = rng.uniform(-np.pi, np.pi, 6)
        T = forward_kinematics(q)
        assert np.linalg.norm(wrist_center(T, TABLE.d6) - frame_origin(q, TABLE, 5)) < 1e-9


# ─── Inverse kinematics ───────────────────────────────────────────────────────
def test_round_trip_returns_eight_solutions_including_the_input():
    for q in _random_joints(1000):
        T = forward_kinematics(q)
        result = inverse_kinematics(T)
        assert len(result) == 8
        assert result.singularity is Singularity.NONE
        err = min(np.max(np.abs(wrap_angle(sol - q))) for sol in result.solutions)
        assert err < 1e-6
        for sol in result.solutions:
            T_sol = forward_kinematics(sol)
            assert np.linalg.norm(T_sol[:3, 3] - T[:3, 3]) < 1e-6
            assert np.linalg.norm(T_sol[:3, :3] - T[:3, :3]) < 1e-6


def test_round_trip_with_negated_link_lengths():
    table = DHTable.ur5(negate_a=True)
    q = np.array([0.4, -1.1, 1.3, -0.6, 0.8, 0.2])
    result = inverse_kinematics(forward_kinematics(q, table), table)
    assert len(result) > 0
    assert min(np.max(np.abs(wrap_angle(s - q))) for s in result.solutions) < 1e-6


def test_wrist_singularity_is_flagged_and_solved():
    q = np.array([0.3, -1.0, 1.2, 0.4, 0.0, 0.7])
    T = forward_kinematics(q)
    result = inverse_kinematics(T)
    assert result.singularity is Singularity.WRIST
    wrist = [s for s, kind in zip(result.solutions, result.singular) if kind is Singularity.WRIST]
    assert wrist
    for sol in wrist:
        assert sol[4] == pytest.approx(0.0, abs=1e-9) or abs(abs(sol[4]) - np.pi) < 1e-9
        T_sol = forward_kinematics(sol)
        assert np.linalg.norm(T_sol[:3, 3] - T[:3, 3]) < 1e-6
        assert np.linalg.norm(T_sol[:3, :3] - T[:3, :3]) < 1e-6


def test_target_on_base_axis_is_shoulder_unreachable():
    T = np.eye(4)
    T[:3, 3] = [0.0, 0.0, 0.5 + TABLE.d6]
    result = inverse_kinematics(T)
    assert len(result) == 0
    assert result.reason == "shoulder unreachable"


def test_far_target_is_elbow_unreachable():
    T = np.eye(4)
    T[:3, 3] = [1.5, 0.3, 0.4]
    result = inverse_kinematics(T)
    assert len(result) == 0
    assert result.reason == "elbow unreachable"


def test_non_orthonormal_target_rejected():
    T = np.eye(4)
    T[0, 0] = 1.1
    with pytest.raises(ValidationError):
        inverse_kinematics(T)


def test_non_ur_layout_rejected():
    rows = list(TABLE.rows)
    rows[1] = DHRow(0.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        inverse_kinematics(np.eye(4), DHTable(rows=tuple(rows)))


def test_wrap_angle_range():
    vals = wrap_angle(np.array([np.pi, -np.pi, 2 * np.pi + 0.5, -0.5]))
    assert np.allclose(vals, [np.pi, np.pi, 0.5, -0.5])


def _shoulder_margin(q, table=TABLE) -> float:
    p5 = wrist_center(forward_kinematics(q, table), table.d6)
    return p5[0] ** 2 + p5[1] ** 2 - table.d4 ** 2


def _residual(q, T) -> float:
    return float(np.max(np.abs(forward_kinematics(q) - T)))


def test_wrist_singular_targets_always_solve():
    rng = np.random.default_rng(11)
    cases = [np.array([-2.669, 2.908, 0.251, 1.721, 0.0, 0.701])]
    while len(cases) < 500:
        q = rng.uniform(-np.pi, np.pi, 6)
        q[4] = rng.choice([0.0, np.pi])
        if _shoulder_margin(q) > 0.01 ** 2:
            cases.append(q)
    for q in cases:
        T = forward_kinematics(q)
        result = inverse_kinematics(T)
        assert len(result) > 0, q
        assert result.singularity is Singularity.WRIST
        assert all(_residual(s, T) < 1e-6 for s in result.solutions)
        for s, kind in zip(result.solutions, result.singular):
            if kind is Singularity.WRIST:
                assert abs(np.sin(s[4])) < 1e-9


def test_straight_elbow_is_flagged_and_recovers_the_input():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 300:
        q = rng.uniform(-np.pi, np.pi, 6)
        q[2] = 0.0
        if abs(np.sin(q[4])) < 0.05 or _shoulder_margin(q) < 0.05 ** 2:
            continue
        checked += 1
        T = forward_kinematics(q)
        result = inverse_kinematics(T)
        assert result.singularity is Singularity.ELBOW, q
        assert min(np.max(np.abs(wrap_angle(s - q))) for s in result.solutions) < 1e-6
        assert len(result) < 8
        assert result.reason


def test_unfiltered_round_trip_recovers_input_and_explains_partial_sets():
    rng = np.random.default_rng(23)
    partial = 0
    for _ in range(2000):
        q = rng.uniform(-np.pi, np.pi, 6)
        T = forward_kinematics(q)
        result = inverse_kinematics(T)
        assert len(result) > 0, q
        assert min(np.max(np.abs(wrap_angle(s - q))) for s in result.solutions) < 1e-6
        if len(result) < 8:
            partial += 1
            assert result.reason, q
            if result.singularity is Singularity.NONE:
                assert "of 8 branches" in result.reason
        else:
            assert result.reason is None
    assert partial > 0


def test_partial_set_reason_counts_unreachable_branches():
    rng = np.random.default_rng(31)
    for _ in range(2000):
        q = rng.uniform(-np.pi, np.pi, 6)
        result = inverse_kinematics(forward_kinematics(q))
        if result.singularity is Singularity.NONE and 0 < len(result) < 8:
            break
    else:
        pytest.fail("no partial solution set in the sample")
    assert result.reason == f"elbow unreachable on {8 - len(result)} of 8 branches"


def _pose(rotvec, translation) -> np.ndarray:
    angle = np.linalg.norm(rotvec)
    k = np.asarray(rotvec, dtype=float) / angle
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    T = np.eye(4)
    T[:3, :3] = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
    T[:3, 3] = translation
    return T


def test_compose_with_identity_delta_is_unchanged():
    T = _pose([0.3, -0.2, 0.9], [0.4, 0.1, 0.2])
    assert np.allclose(compose_pose(T, np.eye(4)), T, atol=1e-15)


def test_pure_translations_add():
    a, b = np.eye(4), np.eye(4)
    a[:3, 3] = [0.1, 0.2, 0.3]
    b[:3, 3] = [-0.05, 0.4, 0.01]
    out = compose_pose(a, b)
    assert np.allclose(out[:3, :3], np.eye(3))
    assert np.allclose(out[:3, 3], [0.05, 0.6, 0.31], atol=1e-15)


def test_accumulated_chain_matches_matrix_product():
    rng = np.random.default_rng(3)
    start = _pose(rng.normal(size=3), rng.normal(size=3))
    deltas = [_pose(rng.normal(size=3), 0.05 * rng.normal(size=3)) for _ in range(5)]
    poses = accumulate_trajectory(start, deltas)
    assert len(poses) == 5
    for i, pose in enumerate(poses):
        expected = np.linalg.multi_dot([start, *deltas[: i + 1]])
        assert np.max(np.abs(pose - expected)) < 1e-12


def test_composition_is_associative():
    rng = np.random.default_rng(8)
    A, B, C = (_pose(rng.normal(size=3), rng.normal(size=3)) for _ in range(3))
    left = compose_pose(compose_pose(A, B), C)
    right = compose_pose(A, compose_pose(B, C))
    assert np.max(np.abs(left - right)) < 1e-12


# ─── Trajectories ─────────────────────────────────────────────────────────────
def test_nearest_solution_prefers_current_branch():
    q = _random_joints(1, seed=5)[0]
    result = inverse_kinematics(forward_kinematics(q))
    chosen = select_nearest_solution(result, q + 0.01)
    assert np.max(np.abs(wrap_angle(chosen - q))) < 1e-6


def test_track_trajectory_follows_small_steps():
    start = _random_joints(1, seed=11)[0]
    step = pose7_to_transform(parse_pose([5.0, 0.0, -3.0, 0.0, 0.0, 0.02, 1.0]))
    joints = track_trajectory(start, [step] * 4)
    assert len(joints) == 4
    assert all(q is not None for q in joints)
    T = forward_kinematics(start)
    for _ in range(4):
        T = T @ step
    assert np.allclose(forward_kinematics(joints[-1])[:3, 3], T[:3, 3], atol=1e-6)


def test_final_position_without_steps_is_home_flange():
    home = np.array([0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0])
    assert np.allclose(final_position(home, []), forward_kinematics(home)[:3, 3])


def test_pose7_to_transform_converts_millimetres():
    T = pose7_to_transform(parse_pose([100, 0, -50, 0, 0, np.pi / 2, 0.5]))
    assert np.allclose(T[:3, 3], [0.1, 0.0, -0.05])
    assert np.allclose(T[:3, :3] @ [1, 0, 0], [0, 1, 0], atol=1e-12)


# ─── Execution rubric ─────────────────────────────────────────────────────────
@pytest.mark.parametrize("kind, ref, dist, expected", [
    (OutcomeKind.SUCCESS, None, None, 100.0),
    (OutcomeKind.EMERGENCY_STOP, None, None, 0.0),
    (OutcomeKind.FAILURE, (0.4, 0.1, 0.2), (0.5, 0.1, 0.2), 90.0),
    (OutcomeKind.FAILURE, (0.0, 0.0, 0.0), (0.0, 1.5, 0.0), 0.0),
    (OutcomeKind.FAILURE, (0.1, 0.1, 0.1), (0.1, 0.1, 0.1), 100.0),
])
def test_execution_score(kind, ref, dist, expected):
    assert execution_score(ExecutionOutcome(kind, ref, dist)) == pytest.approx(expected)


def test_failure_without_positions_is_invalid():
    with pytest.raises(ValidationError):
        execution_score(ExecutionOutcome(OutcomeKind.FAILURE, (0.0, 0.0, 0.0), None))


def test_score_execution_outcomes_fills_from_trajectories():
    outcomes = pd.DataFrame([
        {"image_id": "r_d01", "kind": "Success", "ref_final_xyz": "", "dist_final_xyz": ""},
        {"image_id": "r_d02", "kind": "Failure", "ref_final_xyz": "0.4;0.1;0.2", "dist_final_xyz": "0.45;0.1;0.2"},
        {"image_id": "r_d03", "kind": "Failure", "ref_final_xyz": None, "dist_final_xyz": None},
        {"image_id": "r_d04", "kind": "Failure", "ref_final_xyz": None, "dist_final_xyz": None},
    ])
    step = [0.0, 0.0, 50.0, 0.0, 0.0, 0.0, 1.0]
    trajectories = pd.DataFrame([
        {"image_id": "r_d03", "variant": "ref", "steps": [step]},
        {"image_id": "r_d03", "variant": "dist", "steps": [step, step]},
    ])
    home = (0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0)
    scores = score_execution_outcomes(outcomes, trajectories, TABLE, home)
    assert scores["score"].iloc[0] == 100.0
    assert scores["score"].iloc[1] == pytest.approx(95.0)
    # one extra 50 mm step apart
    assert scores["score"].iloc[2] == pytest.approx(95.0, abs=1e-6)
    assert np.isnan(scores["score"].iloc[3])
    assert scores["error"].iloc[3]


def test_unknown_outcome_kind_rejected():
    outcomes = pd.DataFrame([{"image_id": "x", "kind": "Crashed"}])
    with pytest.raises(ValidationError):
        score_execution_outcomes(outcomes)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation as SciRot

from graspkit.errors import NonPositiveDepth
from graspkit.geometry import (
    CameraIntrinsics,
    Grasp,
    GraspSet,
    Pose,
    Rotation,
    backproject,
    look_at,
    matrix_to_quat,
    pairwise_rotation_errors,
    project,
    project_points,
    quat_to_matrix,
    random_rotation_matrices,
    rotation_error,
    rotation_errors,
    so3_exp,
)

K = CameraIntrinsics(fx=500.0, fy=480.0, cx=255.5, cy=250.0, width=512, height=512)

unit = st.floats(-1, 1, allow_nan=False)
quats = st.tuples(unit, unit, unit, unit).filter(lambda q: np.linalg.norm(q) > 0.1)


@given(quats)
def test_quaternion_matrix_matches_scipy(q):
    q = np.array(q) / np.linalg.norm(q)
    ours = quat_to_matrix(q)
    ref = SciRot.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
    np.testing.assert_allclose(ours, ref, atol=1e-12)
    back = quat_to_matrix(matrix_to_quat(ours))
    np.testing.assert_allclose(back, ours, atol=1e-12)


def test_quaternion_sign_is_canonical():
    a = Rotation((0.5, 0.5, 0.5, 0.5))
    b = Rotation((-0.5, -0.5, -0.5, -0.5))
    assert a == b
    assert a.q[0] > 0


def test_axis_angle_and_rotvec():
    r = Rotation.from_axis_angle((0, 0, 2), math.pi / 2)
    np.testing.assert_allclose(r.apply([1, 0, 0]), [0, 1, 0], atol=1e-12)
    rv = np.array([0.1, -0.4, 0.3])
    np.testing.assert_allclose(Rotation.from_rotvec(rv).matrix, SciRot.from_rotvec(rv).as_matrix(), atol=1e-12)
    np.testing.assert_allclose(so3_exp(rv), SciRot.from_rotvec(rv).as_matrix(), atol=1e-12)
    np.testing.assert_allclose(so3_exp(np.zeros(3)), np.eye(3))


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_pose_compose_inverse(seed):
    rng = np.random.default_rng(seed)
    a = Pose(Rotation.random(rng), rng.normal(size=3))
    b = Pose(Rotation.random(rng), rng.normal(size=3))
    p = rng.normal(size=(5, 3))
    np.testing.assert_allclose((a @ b).apply(p), a.apply(b.apply(p)), atol=1e-12)
    np.testing.assert_allclose((a @ a.inverse()).as_matrix(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(Pose.from_matrix(a.as_matrix()).as_matrix(), a.as_matrix(), atol=1e-12)


def test_pose_json_round_trip():
    rng = np.random.default_rng(3)
    p = Pose(Rotation.random(rng), (0.1, -0.2, 0.7))
    assert Pose.from_json(p.to_json()) == p
    g = Grasp(p, 0.05, 3)
    assert Grasp.from_json(g.to_json()) == g


@settings(max_examples=100)
@given(st.floats(0, 511), st.floats(0, 511), st.floats(0.1, 5.0))
def test_project_backproject_round_trip(u, v, z):
    X = backproject(np.array([u, v]), z, K)
    pp = project(X, K)
    assert pp.u == pytest.approx(u, abs=1e-9)
    assert pp.v == pytest.approx(v, abs=1e-9)


def test_principal_point_projects_to_centre():
    pp = project([0, 0, 2.0], K)
    assert (pp.u, pp.v) == (K.cx, K.cy)


def test_non_positive_depth_raises():
    with pytest.raises(NonPositiveDepth):
        project_points([[0, 0, 0.0]], K)
    with pytest.raises(NonPositiveDepth):
        project_points([[0.1, 0, -1.0]], K)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
    assert CameraIntrinsics.from_json(K.to_json()) == K
    np.testing.assert_allclose(K.K @ K.K_inv, np.eye(3), atol=1e-12)


def test_rotation_error_matches_arccos_and_is_stable():
    rng = np.random.default_rng(0)
    A = random_rotation_matrices(rng, 200)
    B = random_rotation_matrices(rng, 200)
    ref = np.arccos(np.clip((np.einsum("nij,nij->n", A, B) - 1) / 2, -1, 1))
    np.testing.assert_allclose(rotation_errors(A, B), ref, atol=1e-9)
    tiny = Rotation.from_axis_angle((1, 0, 0), 1e-9)
    assert rotation_error(Rotation.identity(), tiny) == pytest.approx(1e-9, rel=1e-6)
    flip = Rotation.from_axis_angle((0, 1, 0), math.pi)
    assert rotation_error(Rotation.identity(), flip) == pytest.approx(math.pi)


def test_symmetric_rotation_error_ignores_half_turn_about_approach():
    half = Rotation.from_axis_angle((0, 0, 1), math.pi)
    assert rotation_error(Rotation.identity(), half) == pytest.approx(math.pi)
    assert rotation_error(Rotation.identity(), half, symmetric=True) == pytest.approx(0, abs=1e-12)


def test_pairwise_rotation_errors_shape():
    rng = np.random.default_rng(1)
    A = random_rotation_matrices(rng, 3)
    B = random_rotation_matrices(rng, 4)
    E = pairwise_rotation_errors(A, B)
    assert E.shape == (3, 4)
    assert E[1, 2] == pytest.approx(rotation_errors(A[1], B[2]))


def test_look_at_points_camera_at_target():
    eye = np.array([0.5, -0.3, 0.8])
    ext = look_at(eye, np.zeros(3))
    np.testing.assert_allclose(ext.apply(eye), 0, atol=1e-12)
    c = ext.apply(np.zeros(3))
    assert c[0] == pytest.approx(0, abs=1e-12) and c[1] == pytest.approx(0, abs=1e-12)
    assert c[2] == pytest.approx(np.linalg.norm(eye))
    # world up should appear towards -y (image up) in the camera frame
    assert ext.apply(np.array([0, 0, 0.1]))[1] < 0


def test_grasp_set_round_trip_and_transform():
    rng = np.random.default_rng(2)
    gs = GraspSet(random_rotation_matrices(rng, 4), rng.normal(size=(4, 3)), np.full(4, 0.05), np.arange(4))
    T = Pose(Rotation.random(rng), (1, 2, 3))
    moved = gs.transformed(T)
    for g, m in zip(gs.to_grasps(), moved.to_grasps()):
        np.testing.assert_allclose((T @ g.pose).as_matrix(), m.pose.as_matrix(), atol=1e-12)
    back = GraspSet.from_grasps(gs.to_grasps())
    np.testing.assert_allclose(back.R, gs.R, atol=1e-12)
    assert len(GraspSet.concat([gs, GraspSet.empty(), gs])) == 8

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graspkit.codec import (
    DEFAULT_TEMPLATE,
    UNIT_SQUARE,
    BinSpec,
    EncodingArrays,
    GraspEncoding,
    KeypointSet,
    decode_keypoints,
    decode_keypoints_arrays,
    encode,
    encode_arrays,
    grasp_keypoints_3d,
    refine_scale,
    refine_scale_arrays,
)
from graspkit.errors import BehindCamera, DegenerateTranslation, OutOfFrame
from graspkit.geometry import CameraIntrinsics, Grasp, PixelPoint, Pose, Rotation, project_points, random_rotation_matrices

K = CameraIntrinsics(fx=500.0, fy=500.0, cx=255.5, cy=255.5, width=512, height=512)
# gripper x -> camera x, gripper z -> camera y: the keypoint square faces the camera
FACING = np.array([[1.0, 0, 0], [0, 0, 1], [0, -1, 0]]).T


def grasp(R, t, w=0.08):
    return Grasp(Pose.from_Rt(R, t), w)


def test_template_is_planar_unit_square():
    P = DEFAULT_TEMPLATE.canonical
    np.testing.assert_array_equal(P, UNIT_SQUARE)
    assert np.linalg.norm(P[1] - P[0]) == 1.0
    assert np.linalg.norm(P[2] - P[0]) == 1.0
    centered = P - P.mean(0)
    assert np.linalg.svd(centered, compute_uv=False)[-1] == pytest.approx(0, abs=1e-15)


def test_identity_grasp_scale():
    enc = encode(grasp(np.eye(3), (0, 0, 0.5)), K)
    assert enc.scale == 0.5
    assert enc.width == 0.08
    assert (enc.center.u, enc.center.v) == (K.cx, K.cy)


def test_raw_offsets_reproduce_projection():
    enc = encode(grasp(FACING, (0.05, -0.02, 0.7)), K)
    kps = project_points(grasp_keypoints_3d(FACING[None], np.array([[0.05, -0.02, 0.7]]))[0], K)
    np.testing.assert_allclose(enc.center.as_array() + enc.raw_offsets, kps, atol=1e-9)


def test_doubling_distance_halves_raw_and_quarters_stored_offsets():
    # keypoint square at constant depth: projection scales exactly with 1/distance
    d = np.array([0.02, 0.03, 1.0])
    d /= np.linalg.norm(d)
    a = encode(grasp(FACING, 0.4 * d), K)
    b = encode(grasp(FACING, 0.8 * d), K)
    np.testing.assert_allclose(b.raw_offsets, a.raw_offsets / 2, rtol=1e-9)
    np.testing.assert_allclose(b.offset_array, a.offset_array / 4, rtol=1e-9)


def rz(deg):
    return Rotation.from_axis_angle((0, 0, 1), math.radians(deg)).matrix


def test_bins_for_hand_computed_angles():
    assert encode(grasp(FACING, (0, 0, 0.6)), K).bin == 0
    assert encode(grasp(rz(95) @ FACING, (0, 0, 0.6)), K).bin == 4
    assert encode(grasp(rz(179) @ FACING, (0, 0, 0.6)), K).bin == 8


@given(st.floats(0, 2 * math.pi, exclude_max=True))
def test_bin_invariant_to_tip_swap(theta):
    b = BinSpec(9)
    assert b.assign(theta) == b.assign(theta + math.pi)
    assert 0 <= b.assign(theta) < 9


def test_binspec_validation():
    with pytest.raises(ValueError):
        BinSpec(0)
    assert BinSpec(1).assign(3.0) == 0


def test_encode_errors():
    with pytest.raises(BehindCamera):
        encode(grasp(np.eye(3), (0, 0, -0.5)), K)
    with pytest.raises(OutOfFrame):
        encode(grasp(np.eye(3), (0.8, 0, 0.5)), K)


def test_encoding_validation_and_json():
    with pytest.raises(ValueError):
        GraspEncoding(PixelPoint(1, 1), 0, np.zeros((4, 2)), 0.0, 0.05)
    with pytest.raises(ValueError):
        GraspEncoding(PixelPoint(1, 1), 0, np.zeros((4, 2)), 1.0, 0.05, confidence=1.5)
    enc = encode(grasp(FACING, (0.01, 0.02, 0.9)), K)
    assert GraspEncoding.from_json(enc.to_json()) == enc


def test_decode_arithmetic():
    enc = GraspEncoding(PixelPoint(100, 50), 0, [(3, 0), (1, 1), (0, 2), (-1, 0)], 2.0, 0.05)
    kps = decode_keypoints(enc)
    assert (kps[0].u, kps[0].v) == (106, 50)


def test_zero_offsets_decode_to_centre():
    out = decode_keypoints_arrays(np.array([[10.0, 20.0]]), np.zeros((1, 4, 2)), np.array([1.3]))
    np.testing.assert_array_equal(out[0], np.tile([10.0, 20.0], (4, 1)))
    with pytest.raises(ValueError):
        KeypointSet(out[0])


def random_visible(rng, n):
    R = random_rotation_matrices(rng, n)
    uv = rng.uniform([100, 100], [412, 412], (n, 2))
    z = rng.uniform(0.5, 1.5, n)
    t = np.stack([(uv[:, 0] - K.cx) / K.fx * z, (uv[:, 1] - K.cy) / K.fy * z, z], -1)
    return R, t


def test_encode_decode_round_trip_many():
    rng = np.random.default_rng(0)
    R, t = random_visible(rng, 10_000)
    enc, valid, kps = encode_arrays(R, t, np.full(len(t), 0.05), K)
    assert valid.mean() > 0.95
    direct = project_points(grasp_keypoints_3d(R[valid], t[valid]), K)
    dec = decode_keypoints_arrays(enc.centers[valid], enc.offsets[valid], enc.scales[valid])
    np.testing.assert_allclose(dec, direct, atol=1e-9)
    np.testing.assert_allclose(kps[valid], direct, atol=1e-9)
    assert np.all(np.isnan(enc.centers[~valid]))


def test_encoding_arrays_list_round_trip():
    rng = np.random.default_rng(1)
    R, t = random_visible(rng, 20)
    enc, valid, _ = encode_arrays(R, t, np.full(20, 0.05), K)
    enc = enc.subset(valid)
    back = EncodingArrays.from_list(enc.to_list())
    np.testing.assert_array_equal(back.offsets, enc.offsets)
    assert len(EncodingArrays.from_list([])) == 0


def test_refine_scale_examples():
    p = Pose(Rotation.from_axis_angle((1, 0, 0), 0.3), (0, 0, 2))
    q = refine_scale(p, 0.5)
    np.testing.assert_allclose(q.t, [0, 0, 0.5])
    assert q.rotation == p.rotation
    same = refine_scale(p, 2.0)
    np.testing.assert_allclose(same.as_matrix(), p.as_matrix(), atol=1e-12)
    with pytest.raises(DegenerateTranslation):
        refine_scale(Pose(Rotation.identity(), (0, 0, 0)), 1.0)


def test_refine_scale_preserves_direction():
    rng = np.random.default_rng(2)
    t = rng.normal(size=(500, 3))
    s = rng.uniform(0.1, 3, 500)
    out = refine_scale_arrays(t, s)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), s, rtol=1e-12)
    assert np.abs(np.cross(out, t)).max() < 1e-9


def test_normalized_noise_std_scales_with_distance():
    rng = np.random.default_rng(3)
    sigma = 1.5
    R, t = random_visible(rng, 1)
    for S in (0.5, 1.0, 2.0):
        enc, _, _ = encode_arrays(R, t / np.linalg.norm(t) * S, [0.05], K)
        n = 100_000
        centers = np.repeat(enc.centers, n, 0)
        scales = np.repeat(enc.scales, n)
        clean = decode_keypoints_arrays(centers, np.repeat(enc.offsets, n, 0), scales)
        noisy = decode_keypoints_arrays(centers, enc.offsets + sigma * rng.standard_normal((n, 4, 2)), scales)
        assert (noisy - clean).std() == pytest.approx(sigma * S, rel=0.05)

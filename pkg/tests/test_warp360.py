import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flow360.exceptions import ShapeMismatchError, UsageError
from flow360.sphere import SphereRotation, rotate_equirect, rotation_flow, synthetic_texture
from flow360.warp360 import (
    backward_warp,
    brightness_error,
    charbonnier,
    consistency_mask,
    degree_grid,
    flow_to_degrees,
    motion_mask,
    occlusion_masks,
    photometric_loss,
    photometric_terms,
    pole_row_mask,
    resolve_boundary,
    wrap_target_grid,
)

from conftest import random_flow


def iterate_occlusion(m1, m2, max_iter=50):
    """Iterate the mutually recursive occlusion definition from zero."""
    o12 = np.zeros_like(m1)
    o21 = np.zeros_like(m2)
    for _ in range(max_iter):
        n12 = m1 * ((1 - m2) + o21)
        n21 = m2 * ((1 - m1) + o12)
        if np.array_equal(n12, o12) and np.array_equal(n21, o21):
            break
        o12, o21 = n12, n21
    else:
        raise AssertionError("recursion did not settle")
    return o12, o21


def flow_with_masks(m1, m2):
    """Flows whose literal motion masks equal m1 and m2 (eps = 1e-2)."""
    fw = np.zeros(m1.shape + (2,), dtype=np.float32)
    bw = np.zeros(m2.shape + (2,), dtype=np.float32)
    fw[..., 0] = np.where(m1 == 1, 0.0, 1.0)
    bw[..., 1] = np.where(m2 == 1, 0.0, -1.0)
    return fw, bw


# --- degree grid ----------------------------------------------------------

def test_flow_to_degrees():
    h, w = 10, 20
    assert not flow_to_degrees(np.zeros((h, w, 2))).any()
    flow = np.zeros((h, w, 2))
    flow[..., 0] = w / 2
    flow[..., 1] = -h / 2
    deg = flow_to_degrees(flow)
    np.testing.assert_array_equal(deg[..., 0], 180.0)
    np.testing.assert_array_equal(deg[..., 1], -90.0)


def test_degree_grid_spacing():
    g = degree_grid(6, 12)
    np.testing.assert_allclose(np.diff(g[0, :, 0]), 30.0)
    np.testing.assert_allclose(np.diff(g[:, 0, 1]), 30.0)
    assert g[0, 0].tolist() == [-165.0, -75.0]


@pytest.mark.parametrize("lon, lat, want", [
    (30.0, 40.0, (30.0, 40.0)),
    (190.0, 0.0, (-170.0, 0.0)),
    (-200.0, 10.0, (160.0, 10.0)),
    (30.0, 100.0, (-30.0, 80.0)),
    (30.0, -95.0, (-30.0, -85.0)),
    (180.0, 90.0, (180.0, 90.0)),
    (200.0, 100.0, (160.0, 80.0)),
])
def test_resolve_boundary_cases(lon, lat, want):
    got = resolve_boundary(lon, lat)
    assert (float(got[0]), float(got[1])) == want


@settings(max_examples=100, deadline=None)
@given(st.floats(-180, 180), st.floats(-90, 90), st.floats(-360, 360), st.floats(-180, 180))
def test_resolved_targets_in_range(glon, glat, dlon, dlat):
    lon, lat = resolve_boundary(glon + dlon, glat + dlat)
    assert -180 <= lon <= 180 and -90 <= lat <= 90


def test_far_targets_reduce_modulo_360():
    lon, lat = resolve_boundary(np.array([1000.0]), np.array([400.0]))
    assert -180 <= lon[0] <= 180 and -90 <= lat[0] <= 90
    assert lon[0] == pytest.approx(-80.0) and lat[0] == pytest.approx(40.0)


def test_wrap_target_grid_range(rng):
    for _ in range(10):
        flow = random_flow(rng, 8, 16, scale=10.0)
        g = wrap_target_grid(flow)
        assert np.all(np.abs(g[..., 0]) <= 180) and np.all(np.abs(g[..., 1]) <= 90)


# --- warping --------------------------------------------------------------

def test_zero_flow_identity(texture):
    np.testing.assert_array_equal(backward_warp(texture, np.zeros(texture.shape[:2] + (2,))),
                                  texture)


def test_full_wrap_identity(texture):
    h, w = texture.shape[:2]
    flow = np.zeros((h, w, 2), dtype=np.float32)
    flow[..., 0] = w
    np.testing.assert_array_equal(backward_warp(texture, flow), texture)
    flow[..., 0] = -w
    np.testing.assert_array_equal(backward_warp(texture, flow), texture)


@pytest.mark.parametrize("c", [3.25, -7.5, 0.125, 17.0])
def test_longitudinal_periodicity(texture, c):
    h, w = texture.shape[:2]
    flows = []
    for shift in (0, w, -w):
        f = np.zeros((h, w, 2), dtype=np.float32)
        f[..., 0] = c + shift
        flows.append(backward_warp(texture, f))
    np.testing.assert_array_equal(flows[0], flows[1])
    np.testing.assert_array_equal(flows[0], flows[2])


def test_periodicity_random_offsets(texture, rng):
    h, w = texture.shape[:2]
    base = random_flow(rng, h, w, scale=3.0)
    shifted = base.copy()
    shifted[..., 0] += w
    np.testing.assert_allclose(backward_warp(texture, base), backward_warp(texture, shifted),
                               atol=1e-6)


def test_constant_shift_is_roll(texture):
    flow = np.zeros(texture.shape[:2] + (2,), dtype=np.float32)
    flow[..., 0] = 10.0
    np.testing.assert_array_equal(backward_warp(texture, flow), np.roll(texture, -10, axis=1))


def test_pixel_pushed_past_right_edge_reappears_left():
    h, w = 8, 16
    img = np.zeros((h, w, 1), dtype=np.float32)
    img[3, 9] = 1.0
    flow = np.zeros((h, w, 2), dtype=np.float32)
    # last column reads 10 px beyond the right boundary: w - 1 + 10 -> column 9
    flow[3, w - 1, 0] = 10.0
    out = backward_warp(img, flow)
    assert out[3, w - 1, 0] == 1.0
    # the untouched pixel at column 9 still reads itself
    assert out[3, 9, 0] == 1.0 and out.sum() == 2.0


def test_pole_crossing_negates_longitude():
    h, w = 18, 36
    img = np.zeros((h, w, 1), dtype=np.float32)
    flow = np.zeros((h, w, 2), dtype=np.float32)
    # pixel at row 0 (lat -85), col 21 (lon 35): push 10 degrees past the pole
    flow[0, 21, 1] = -10.0 * h / 180.0 * 1.0
    g = wrap_target_grid(flow)
    assert g[0, 21].tolist() == pytest.approx([-35.0, -85.0])
    # sampling lands on the column at lon -35
    img[0, 14] = 1.0
    assert backward_warp(img, flow)[0, 21, 0] == pytest.approx(1.0)


def test_rotation_oracle(texture):
    rot = SphereRotation.from_euler(12, -18, 7)
    h, w = texture.shape[:2]
    back = backward_warp(rotate_equirect(texture, rot), rotation_flow(rot, h, w))
    rows = pole_row_mask(h, 0.05)
    assert np.abs(back - texture)[rows].mean() < 0.02


def test_warp_dimension_mismatch():
    with pytest.raises(ShapeMismatchError):
        backward_warp(np.zeros((4, 8, 1)), np.zeros((4, 6, 2)))


# --- masks ----------------------------------------------------------------

def test_motion_mask_examples(rng):
    assert motion_mask(np.zeros((3, 4, 2)), 1e-2).all()
    flow = np.zeros((3, 4, 2))
    flow[..., 0] = 1.0
    assert not motion_mask(flow, 1e-2).any()
    mixed = rng.normal(size=(5, 6, 2)) * 0.02
    mask = motion_mask(mixed, 1e-2)
    for i in range(5):
        for j in range(6):
            u, v = mixed[i, j].astype(np.float32)
            assert mask[i, j] == int(math.sqrt(float(u) ** 2 + float(v) ** 2) <= 1e-2)
    with pytest.raises(UsageError):
        motion_mask(flow, -1)


@pytest.mark.parametrize("m1, m2", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_occlusion_matches_recursion_per_combination(m1, m2):
    a = np.array([[m1]], dtype=np.int64)
    b = np.array([[m2]], dtype=np.int64)
    fw, bw = flow_with_masks(a, b)
    o_fw, o_bw = occlusion_masks(fw, bw, 1e-2)
    i_fw, i_bw = iterate_occlusion(a, b)
    assert (o_fw[0, 0], o_bw[0, 0]) == (i_fw[0, 0], i_bw[0, 0])


def test_occlusion_examples():
    one, zero = np.ones((1, 1), int), np.zeros((1, 1), int)
    o = occlusion_masks(*flow_with_masks(one, zero))
    assert (o[0][0, 0], o[1][0, 0]) == (1, 0)
    o = occlusion_masks(*flow_with_masks(one, one))
    assert (o[0][0, 0], o[1][0, 0]) == (0, 0)
    z = np.zeros((4, 5, 2))
    o_fw, o_bw = occlusion_masks(z, z)
    assert not o_fw.any() and not o_bw.any()


def test_occlusion_random_fields(rng):
    for _ in range(20):
        a = (rng.uniform(size=(6, 7)) < 0.5).astype(np.int64)
        b = (rng.uniform(size=(6, 7)) < 0.5).astype(np.int64)
        got = occlusion_masks(*flow_with_masks(a, b))
        want = iterate_occlusion(a, b)
        np.testing.assert_array_equal(got[0], want[0])
        np.testing.assert_array_equal(got[1], want[1])


def test_consistency_mode():
    h, w = 8, 16
    fw = np.zeros((h, w, 2), dtype=np.float32)
    fw[..., 0] = 2.0
    bw = -fw
    assert consistency_mask(fw, bw).all()
    # a consistent pair is fully visible; the literal reading flags nothing
    # as occluded either since both frames move
    o_fw, o_bw = occlusion_masks(fw, bw, mode="fb-consistency")
    assert o_fw.sum() == 0 and o_bw.sum() == 0
    bad = bw.copy()
    bad[2, 3, 0] = 5.0
    m = consistency_mask(bad, fw)
    assert m[2, 3] == 0 and m.sum() == h * w - 1
    # consistent across the seam
    fw[..., 0] = 3.0 - w
    assert consistency_mask(fw, -np.full_like(fw, 0) - np.stack(
        [np.full((h, w), 3.0), np.zeros((h, w))], -1).astype(np.float32)).all()
    with pytest.raises(UsageError):
        occlusion_masks(fw, bw, mode="nope")


# --- losses ---------------------------------------------------------------

def test_charbonnier():
    assert charbonnier(0.0) == pytest.approx(0.01 ** 0.1)
    assert charbonnier(-0.5) == pytest.approx(0.51 ** 0.1)


def test_photometric_identical_inputs(texture):
    z = np.zeros(texture.shape[:2], dtype=np.uint8)
    loss = photometric_loss(texture, texture, texture, texture, z, z)
    assert loss == pytest.approx(2 * 0.01 ** 0.1, abs=1e-12)
    assert loss == pytest.approx(1.26191, abs=1e-5)


def test_photometric_fully_occluded(texture):
    one = np.ones(texture.shape[:2], dtype=np.uint8)
    assert photometric_loss(texture, texture, 1 - texture, texture, one, one) == 0.0


def test_photometric_one_direction_error():
    i = np.full((4, 8, 3), 0.25, dtype=np.float32)
    z = np.zeros((4, 8), dtype=np.uint8)
    fw, bw = photometric_terms(i, i, i + 0.5, i, z, z)
    assert fw == pytest.approx(0.51 ** 0.1) and fw == pytest.approx(0.93488, abs=1e-5)
    assert bw == pytest.approx(0.01 ** 0.1) and bw == pytest.approx(0.63096, abs=1e-5)
    assert photometric_loss(i, i, i + 0.5, i, z, z) == pytest.approx(fw + bw)


def test_photometric_mask_normalisation(rng):
    i1 = rng.uniform(size=(4, 5, 1)).astype(np.float32)
    p1 = rng.uniform(size=(4, 5, 1)).astype(np.float32)
    o = (rng.uniform(size=(4, 5)) < 0.3).astype(np.uint8)
    z = np.zeros((4, 5), np.uint8)
    fw, _ = photometric_terms(i1, i1, p1, i1, o, z)
    vals = [(abs(float(i1[a, b, 0]) - float(p1[a, b, 0])) + 0.01) ** 0.1
            for a in range(4) for b in range(5) if o[a, b] == 0]
    assert fw == pytest.approx(sum(vals) / len(vals))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_photometric_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    h, w = 4, 6
    imgs = [rng.uniform(size=(h, w, 3)).astype(np.float32) for _ in range(4)]
    masks = [(rng.uniform(size=(h, w)) < 0.4).astype(np.uint8) for _ in range(2)]
    perm = rng.permutation(h * w)

    def shuffle(a):
        return a.reshape(h * w, *a.shape[2:])[perm].reshape(a.shape)

    base = photometric_loss(*imgs, *masks)
    shuffled = photometric_loss(*[shuffle(a) for a in imgs], *[shuffle(m) for m in masks])
    assert shuffled == pytest.approx(base, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_photometric_monotone_in_error(seed):
    rng = np.random.default_rng(seed)
    i1 = np.full((3, 4, 1), 0.5, dtype=np.float32)
    d = rng.uniform(0, 0.4, size=(3, 4, 1)).astype(np.float32)
    grow = d + rng.uniform(0, 0.1, size=d.shape).astype(np.float32)
    z = np.zeros((3, 4), np.uint8)
    assert (photometric_loss(i1, i1, i1 + grow, i1, z, z)
            >= photometric_loss(i1, i1, i1 + d, i1, z, z))


def test_photometric_validation(texture):
    z = np.zeros(texture.shape[:2], np.uint8)
    with pytest.raises(ShapeMismatchError):
        photometric_loss(texture, texture[:-1], texture, texture, z, z)
    with pytest.raises(UsageError):
        photometric_loss(texture, texture, texture, texture, z, z, q=0)


def test_brightness_error_examples(texture):
    h, w = texture.shape[:2]
    z = np.zeros((h, w, 2), dtype=np.float32)
    assert brightness_error(texture, z, texture) == 0.0
    assert brightness_error(np.zeros((4, 8, 3)), np.zeros((4, 8, 2)), np.ones((4, 8, 3))) == 1.0
    rot = SphereRotation.from_euler(5, 20, -10)
    err = brightness_error(texture, rotation_flow(rot, h, w), rotate_equirect(texture, rot),
                           pole_margin=0.05)
    assert err < 0.02


def test_pole_row_mask():
    keep = pole_row_mask(128, 0.05)
    assert keep.sum() == 128 - 2 * 7
    assert pole_row_mask(10, 0.0).all()

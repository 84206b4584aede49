"""Seam- and pole-aware warping, occlusion masks and photometric losses.

Warping happens on a degree grid: longitude in [-180, 180] across the
width and latitude in [-90, 90] down the height (the top row is -90, so
a positive ``v`` flow increases latitude).  Targets that leave the grid
are folded back in before sampling: past the right edge they re-enter on
the left, and past a pole the latitude is reflected and the longitude
negated.
"""

import numpy as np

from ._validation import check_flow, check_image, check_mask, check_same_hw
from .exceptions import UsageError
from .raster import WRAP_CLAMP, sample


def flow_to_degrees(flow):
    """Pixel flow to ``(dlon, dlat)`` degrees, shape H x W x 2 (float64)."""
    flow = check_flow(flow).astype(np.float64)
    h, w = flow.shape[:2]
    return np.stack([flow[..., 0] * (360.0 / w), flow[..., 1] * (180.0 / h)], axis=-1)


def degree_grid(h, w):
    """``(lon, lat)`` of every pixel center, shape H x W x 2."""
    lon = (np.arange(w, dtype=np.float64) + 0.5) * (360.0 / w) - 180.0
    lat = (np.arange(h, dtype=np.float64) + 0.5) * (180.0 / h) - 90.0
    glon, glat = np.meshgrid(lon, lat)
    return np.stack([glon, glat], axis=-1)


def resolve_boundary(lon, lat):
    """Fold out-of-range degree targets back onto the sphere.

    Longitudes outside [-180, 180] become ``sign(lon) * (|lon| - 360)``;
    latitudes outside [-90, 90] become ``sign(lat) * (180 - |lat|)`` and
    flip the sign of the longitude.  Targets more than one full turn away
    are reduced modulo 360 first so the fold always lands in range.
    """
    lon = np.array(lon, dtype=np.float64)
    lat = np.array(lat, dtype=np.float64)
    far = np.abs(lon) > 540.0
    lon[far] = np.mod(lon[far] + 180.0, 360.0) - 180.0
    far = np.abs(lat) > 270.0
    lat[far] = np.mod(lat[far] + 180.0, 360.0) - 180.0

    out_lon = np.abs(lon) > 180.0
    lon[out_lon] = np.sign(lon[out_lon]) * (np.abs(lon[out_lon]) - 360.0)
    out_lat = np.abs(lat) > 90.0
    lat[out_lat] = np.sign(lat[out_lat]) * (180.0 - np.abs(lat[out_lat]))
    lon[out_lat] = -lon[out_lat]
    return lon, lat


def wrap_target_grid(flow):
    """Degree-space sampling targets of ``grid + flow``, folded into range."""
    deg = flow_to_degrees(flow)
    h, w = deg.shape[:2]
    target = degree_grid(h, w) + deg
    lon, lat = resolve_boundary(target[..., 0], target[..., 1])
    return np.stack([lon, lat], axis=-1)


def degrees_to_pixels(lon, lat, h, w):
    """Array-index coordinates ``(x, y)`` of degree positions."""
    x = (np.asarray(lon) + 180.0) * (w / 360.0) - 0.5
    y = (np.asarray(lat) + 90.0) * (h / 180.0) - 0.5
    return x, y


def backward_warp(img, flow, interpolation="bilinear", policy=WRAP_CLAMP):
    """Predict frame 1 by sampling ``img`` (frame 2) at ``p + flow(p)``."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    flow = check_flow(flow)
    h, w = check_same_hw(img, flow, names=("image", "flow"))
    grid = wrap_target_grid(flow)
    x, y = degrees_to_pixels(grid[..., 0], grid[..., 1], h, w)
    return sample(img, x, y, policy, interpolation).astype(np.float32)


def motion_mask(flow, eps=1e-2):
    """1 where the flow magnitude is at most ``eps``, else 0."""
    if eps < 0:
        raise UsageError("eps must be non-negative")
    flow = check_flow(flow).astype(np.float64)
    return (np.hypot(flow[..., 0], flow[..., 1]) <= eps).astype(np.uint8)


def consistency_mask(flow_fw, flow_bw, eps=1e-2):
    """1 where ``|fw(p) + bw(p + fw(p))| <= eps`` (forward-backward agreement)."""
    if eps < 0:
        raise UsageError("eps must be non-negative")
    flow_fw = check_flow(flow_fw, "flow_fw")
    flow_bw = check_flow(flow_bw, "flow_bw")
    check_same_hw(flow_fw, flow_bw, names=("flow_fw", "flow_bw"))
    h, w = flow_fw.shape[:2]
    bw_at_target = backward_warp(flow_bw, flow_fw).astype(np.float64)
    s = flow_fw.astype(np.float64) + bw_at_target
    # the round trip may legitimately wrap once around the seam
    s[..., 0] = np.mod(s[..., 0] + w / 2.0, w) - w / 2.0
    return (np.hypot(s[..., 0], s[..., 1]) <= eps).astype(np.uint8)


def occlusion_masks(flow_fw, flow_bw, eps=1e-2, mode="literal"):
    """Forward and backward occlusion maps from a flow pair.

    With per-frame masks ``m1`` and ``m2`` the mutually recursive
    definition ``o12 = m1 * ((1 - m2) + o21)``, ``o21 = m2 * ((1 - m1) + o12)``
    iterated from zero settles after one step at
    ``o12 = m1 * (1 - m2)`` and ``o21 = m2 * (1 - m1)``.

    ``mode="literal"`` builds ``m_i`` from the flow magnitude,
    ``mode="fb-consistency"`` from forward-backward agreement.
    """
    flow_fw = check_flow(flow_fw, "flow_fw")
    flow_bw = check_flow(flow_bw, "flow_bw")
    check_same_hw(flow_fw, flow_bw, names=("flow_fw", "flow_bw"))
    if mode == "literal":
        m1 = motion_mask(flow_fw, eps)
        m2 = motion_mask(flow_bw, eps)
    elif mode == "fb-consistency":
        m1 = consistency_mask(flow_fw, flow_bw, eps)
        m2 = consistency_mask(flow_bw, flow_fw, eps)
    else:
        raise UsageError(f"unknown occlusion mode {mode!r}")
    return m1 * (1 - m2), m2 * (1 - m1)


def charbonnier(x, eps=1e-2, q=0.1):
    """Robust penalty ``(|x| + eps) ** q``."""
    return (np.abs(x) + eps) ** q


def photometric_terms(i1, i2, i1_pred, i2_pred, o_fw, o_bw, eps=1e-2, q=0.1):
    """The forward and backward photometric loss terms, as a pair of floats.

    Each term averages the penalty over channels, then over the pixels the
    mask leaves visible.  A fully occluded direction contributes 0.
    """
    i1 = check_image(i1, "I1")
    i2 = check_image(i2, "I2")
    i1_pred = check_image(i1_pred, "I1_pred")
    i2_pred = check_image(i2_pred, "I2_pred")
    o_fw = check_mask(o_fw, "O_fw")
    o_bw = check_mask(o_bw, "O_bw")
    check_same_hw(i1, i2, i1_pred, i2_pred, o_fw, o_bw,
                  names=("I1", "I2", "I1_pred", "I2_pred", "O_fw", "O_bw"))
    if eps < 0 or not 0 < q <= 1:
        raise UsageError("photometric loss needs eps >= 0 and 0 < q <= 1")
    terms = []
    for img, pred, occ in ((i1, i1_pred, o_fw), (i2, i2_pred, o_bw)):
        diff = img.astype(np.float64) - pred.astype(np.float64)
        penalty = charbonnier(diff, eps, q).mean(axis=2)
        visible = 1.0 - occ.astype(np.float64)
        norm = visible.sum()
        terms.append(float((penalty * visible).sum() / norm) if norm > 0 else 0.0)
    return terms[0], terms[1]


def photometric_loss(i1, i2, i1_pred, i2_pred, o_fw, o_bw, eps=1e-2, q=0.1):
    """Occlusion-masked robust photometric loss summed over both directions."""
    fw, bw = photometric_terms(i1, i2, i1_pred, i2_pred, o_fw, o_bw, eps, q)
    return fw + bw


def pole_row_mask(h, margin):
    """Boolean rows mask excluding ``ceil(margin * h)`` rows at each pole."""
    if not 0 <= margin < 0.5:
        raise UsageError("pole margin must be in [0, 0.5)")
    k = int(np.ceil(margin * h - 1e-9))
    keep = np.ones(h, dtype=bool)
    if k:
        keep[:k] = False
        keep[h - k:] = False
    return keep


def brightness_error(i1, flow_fw, i2, pole_margin=0.0):
    """RMS difference between frame 1 and frame 2 warped back by ``flow_fw``."""
    i1 = check_image(i1, "I1")
    i2 = check_image(i2, "I2")
    flow_fw = check_flow(flow_fw, "flow_fw")
    h, _ = check_same_hw(i1, i2, flow_fw, names=("I1", "I2", "flow"))
    warped = backward_warp(i2, flow_fw).astype(np.float64)
    rows = pole_row_mask(h, pole_margin)
    diff = warped[rows] - i1.astype(np.float64)[rows]
    return float(np.sqrt(np.mean(diff ** 2)))

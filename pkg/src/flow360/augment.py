"""Spherical data augmentation of perspective image/flow training data.

A perspective frame is resized to 2:1, wrapped onto the unit sphere and
re-projected equirectangularly (a deliberately lossy pass that introduces
polar distortion).  Flow fields are first scaled by a latitude-dependent
correction and then sent through the identical coordinate map.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_flow, check_image, check_positive_dims
from .exceptions import ShapeMismatchError, UsageError
from .raster import resize_nearest
from .sphere import project_omega

CORRECTION_MODES = ("paper", "geometric")


@dataclass(frozen=True)
class CorrectionProfile:
    row_scale: np.ndarray
    col_scale: np.ndarray
    mode: str

    @property
    def shape(self):
        return self.row_scale.shape[0], self.col_scale.shape[0]


def _half_sine(n):
    """``sin(pi (i + 0.5) / n)``, evaluated from the nearer end so it is exactly symmetric."""
    i = np.arange(n)
    return np.sin(np.pi * (np.minimum(i, n - 1 - i) + 0.5) / n)


def correction_profile(h, w, mode="paper"):
    """Per-row ``u`` and per-column ``v`` scale factors for an h x w flow.

    ``row_scale[i] = sin(pi (i + 0.5) / h)`` is the radius of the latitude
    circle through row ``i`` relative to the equator.  In ``"paper"`` mode
    the columns get the analogous ``sin(pi (j + 0.5) / w)``; in
    ``"geometric"`` mode ``v`` is left alone.
    """
    check_positive_dims(h, w)
    if mode not in CORRECTION_MODES:
        raise UsageError(f"unknown correction mode {mode!r}")
    rows = _half_sine(h)
    if mode == "paper":
        cols = _half_sine(w)
    else:
        cols = np.ones(w)
    return CorrectionProfile(rows, cols, mode)


def correct_flow(flow, profile):
    flow = check_flow(flow)
    if flow.shape[:2] != profile.shape:
        raise ShapeMismatchError(
            f"profile is {profile.shape} but flow is {flow.shape[:2]}")
    out = flow.astype(np.float64)
    out[..., 0] *= profile.row_scale[:, None]
    out[..., 1] *= profile.col_scale[None, :]
    return out.astype(np.float32)


def _target_height(src_h, height):
    h = src_h if height is None else height
    check_positive_dims(h)
    return int(h)


def augment_image(img, height=None, interpolation="bilinear"):
    """Resize to ``height x 2*height`` (default: source height) and project."""
    img = check_image(img)
    h = _target_height(img.shape[0], height)
    return np.clip(project_omega(resize_nearest(img, h, 2 * h), interpolation), 0.0, 1.0)


def augment_flow(flow, height=None, mode="paper", interpolation="bilinear"):
    """Resize to 2:1, apply the correction profile, then project like an image."""
    flow = check_flow(flow)
    h = _target_height(flow.shape[0], height)
    resized = resize_nearest(flow, h, 2 * h)
    corrected = correct_flow(resized, correction_profile(h, 2 * h, mode))
    return project_omega(corrected, interpolation)


def augment_triple(img1, img2, flow, height=None, mode="paper", interpolation="bilinear"):
    return (augment_image(img1, height, interpolation),
            augment_image(img2, height, interpolation),
            augment_flow(flow, height, mode, interpolation))


class SphericalAugmenter(BaseEstimator, TransformerMixin):
    """Stateless transformer applying spherical augmentation to a batch.

    ``transform`` takes a batch of images (N x H x W x C, or a list of
    H x W x C arrays) and ``transform_flow`` a batch of flow fields.
    """

    def __init__(self, height=None, correction="paper", interpolation="bilinear"):
        self.height = height
        self.correction = correction
        self.interpolation = interpolation

    def fit(self, X=None, y=None):
        if self.correction not in CORRECTION_MODES:
            raise UsageError(f"unknown correction mode {self.correction!r}")
        if self.interpolation not in ("bilinear", "nearest"):
            raise UsageError(f"unknown interpolation {self.interpolation!r}")
        return self

    def transform(self, X):
        self.fit()
        return np.stack([augment_image(x, self.height, self.interpolation) for x in X])

    def transform_flow(self, F):
        self.fit()
        return np.stack([augment_flow(f, self.height, self.correction, self.interpolation)
                         for f in F])

    def __sklearn_is_fitted__(self):
        return True

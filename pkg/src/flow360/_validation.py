"""Input validation helpers in the spirit of ``sklearn.utils.check_array``."""

import numpy as np

from .exceptions import ShapeMismatchError, UsageError


def check_image(img, name="image"):
    """Return ``img`` as a float32 H x W x C array with C in {1, 3}.

    2-D input is promoted to a single channel.
    """
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ShapeMismatchError(
            f"{name} must be HxW or HxWxC with C in (1, 3), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"{name} has an empty dimension: {arr.shape}")
    arr = arr.astype(np.float32, copy=False)
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr


def check_flow(flow, name="flow"):
    """Return ``flow`` as a float32 H x W x 2 array."""
    arr = np.asarray(flow)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ShapeMismatchError(f"{name} must be HxWx2, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"{name} has an empty dimension: {arr.shape}")
    arr = arr.astype(np.float32, copy=False)
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr


def check_mask(mask, name="mask"):
    arr = np.asarray(mask)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be HxW, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise UsageError(f"{name} must be binary")
    return arr.astype(np.uint8)


def check_same_hw(*arrays, names=None):
    shapes = [np.shape(a)[:2] for a in arrays]
    if len(set(shapes)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise ShapeMismatchError(f"{label} have mismatched dimensions: {shapes}")
    return shapes[0]


def check_feature_batch(x, name="features"):
    """Return a float64 N x H x W x C batch; a single H x W x C map gets N=1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeMismatchError(
            f"{name} must be HxWxC or NxHxWxC, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr


def check_positive_dims(*dims):
    for d in dims:
        if int(d) != d or d < 1:
            raise UsageError(f"dimensions must be positive integers, got {dims}")

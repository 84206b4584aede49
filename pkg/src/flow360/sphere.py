"""Equirectangular <-> sphere geometry.

Normalized image coordinates ``(u, v)`` run over ``[0, 1]`` with ``v = 0``
at the top row.  On the unit sphere ``theta`` is the polar angle measured
from the north pole (``theta = 0`` is the top of the image) and ``phi`` is
the azimuth in ``[0, 2 pi)``.  The direction of a spherical coordinate is
``(sin theta cos phi, sin theta sin phi, cos theta)``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_dims
from .exceptions import ShapeMismatchError, UsageError
from .raster import WRAP_CLAMP, _snap, sample

TWO_PI = 2.0 * np.pi


def forward_map(u, v):
    """Perspective plane to sphere: ``phi = 2 pi u``, ``cos(theta) = 2 v - 1``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    theta = np.arccos(np.clip(2.0 * v - 1.0, -1.0, 1.0))
    phi = np.mod(TWO_PI * u, TWO_PI)
    return theta, phi


def equirect_map(u, v):
    """Standard equirectangular map: ``theta = pi v``, ``phi = 2 pi u``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return np.pi * v, np.mod(TWO_PI * u, TWO_PI)


def omega_source_v(v_prime):
    """Row (normalized) of the perspective input seen by output row ``v_prime``.

    Solves ``forward_map(u, v)`` = ``equirect_map(u, v')`` for ``v`` with the
    image kept upright (top of image = north pole), giving
    ``v = (1 - cos(pi v')) / 2``.  The column is passed through unchanged.
    """
    return (1.0 - np.cos(np.pi * np.asarray(v_prime, dtype=np.float64))) / 2.0


def spherical_to_unit(theta, phi):
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def unit_to_spherical(d):
    d = np.asarray(d, dtype=np.float64)
    # atan2 keeps full precision next to the poles, unlike arccos(z)
    theta = np.arctan2(np.hypot(d[..., 0], d[..., 1]), d[..., 2])
    phi = np.mod(np.arctan2(d[..., 1], d[..., 0]), TWO_PI)
    return theta, phi


def pixel_grid(h, w):
    """Normalized ``(u, v)`` of every pixel center, each of shape (h, w)."""
    v = (np.arange(h, dtype=np.float64) + 0.5) / h
    u = (np.arange(w, dtype=np.float64) + 0.5) / w
    return np.meshgrid(u, v)


def pixel_directions(h, w):
    u, v = pixel_grid(h, w)
    return spherical_to_unit(*equirect_map(u, v))


def directions_to_pixels(d, h, w):
    """Array-index coordinates ``(x, y)`` of unit directions on an h x w grid."""
    theta, phi = unit_to_spherical(d)
    return phi / TWO_PI * w - 0.5, theta / np.pi * h - 0.5


@dataclass(frozen=True)
class SphereRotation:
    """A proper rotation of the sphere, stored as a 3x3 matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise UsageError(f"rotation matrix must be 3x3, got {m.shape}")
        if not np.allclose(m.T @ m, np.eye(3), atol=1e-6):
            raise UsageError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > 1e-6:
            raise UsageError("rotation matrix must have determinant +1")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def from_euler(cls, yaw=0.0, pitch=0.0, roll=0.0):
        """Build ``Rz(yaw) @ Ry(pitch) @ Rx(roll)`` from angles in degrees.

        Yaw turns about the polar axis, so a pure yaw moves every pixel
        ``yaw * w / 360`` columns to the right.
        """
        a, b, c = np.radians([yaw, pitch, roll])
        rz = np.array([[np.cos(a), -np.sin(a), 0.0],
                       [np.sin(a), np.cos(a), 0.0],
                       [0.0, 0.0, 1.0]])
        ry = np.array([[np.cos(b), 0.0, np.sin(b)],
                       [0.0, 1.0, 0.0],
                       [-np.sin(b), 0.0, np.cos(b)]])
        rx = np.array([[1.0, 0.0, 0.0],
                       [0.0, np.cos(c), -np.sin(c)],
                       [0.0, np.sin(c), np.cos(c)]])
        return cls(rz @ ry @ rx)

    def __matmul__(self, other):
        """``self @ other`` applies ``other`` first."""
        return SphereRotation(self.matrix @ other.matrix)

    def inverse(self):
        return SphereRotation(self.matrix.T)

    def apply(self, d):
        return np.asarray(d, dtype=np.float64) @ self.matrix.T


def _check_equirect(img, name="image"):
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ShapeMismatchError(f"{name} must be HxWxC, got {img.shape}")
    h, w = img.shape[:2]
    if w != 2 * h:
        raise ShapeMismatchError(f"{name} must have a 2:1 aspect ratio, got {w}x{h}")
    return img


def omega_sample_coords(h, w):
    """Source array-index coordinates used by :func:`project_omega`."""
    v_prime = (np.arange(h, dtype=np.float64) + 0.5) / h
    y = omega_source_v(v_prime) * h - 0.5
    x = np.arange(w, dtype=np.float64)
    return np.meshgrid(x, y)


def project_omega(img, interpolation="bilinear"):
    """Project a 2:1 raster onto the sphere and back to equirectangular.

    Done as one resampling pass: output row ``v'`` reads input row
    ``(1 - cos(pi v')) / 2``; columns are untouched.  Works on any channel
    count, so flow fields go through the identical coordinate map.
    """
    img = _check_equirect(img)
    h, w = img.shape[:2]
    x, y = omega_sample_coords(h, w)
    return sample(img, x, y, WRAP_CLAMP, interpolation).astype(np.float32)


def rotate_equirect(img, rot, interpolation="bilinear"):
    """Rotate the scene of an equirectangular image by ``rot``.

    The output at direction ``d`` is the input at ``rot^-1 d``, so content at
    ``d`` in the input appears at ``rot d`` in the output.
    """
    img = _check_equirect(img)
    h, w = img.shape[:2]
    d = pixel_directions(h, w)
    x, y = directions_to_pixels(rot.inverse().apply(d), h, w)
    return sample(img, x, y, WRAP_CLAMP, interpolation).astype(np.float32)


def wrap_horizontal(du, w):
    """Reduce horizontal displacements modulo ``w`` into ``(-w/2, w/2]``."""
    du = np.asarray(du, dtype=np.float64)
    r = np.mod(du + w / 2.0, w) - w / 2.0
    return np.where(r == -w / 2.0, w / 2.0, r)


def rotation_flow(rot, h, w):
    """Ground-truth flow of a scene rotated by ``rot`` on an h x w grid.

    Each pixel's displacement points from its own center to the pixel
    position of its rotated direction; the horizontal part is reduced into
    ``(-w/2, w/2]``.
    """
    check_positive_dims(h, w)
    d = pixel_directions(h, w)
    x, y = directions_to_pixels(rot.apply(d), h, w)
    x, y = _snap(x), _snap(y)
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    flow = np.stack([wrap_horizontal(x - cols, w), y - rows], axis=-1).astype(np.float32)
    # float32 rounding can land a value just above -w/2 exactly on it
    u = flow[..., 0]
    u[u <= -w / 2.0] += np.float32(w)
    return flow


def synthetic_texture(h, w, seed=0, channels=3, waves=6, max_frequency=4.0):
    """A smooth random texture defined on the sphere, sampled equirectangularly.

    Each channel is a sum of plane waves in 3-D evaluated on pixel
    directions, so it is continuous across the seam and the poles and any
    rotation of it is again a smooth function.  Values lie in [0.1, 0.9].
    """
    check_positive_dims(h, w)
    rng = np.random.default_rng(seed)
    d = pixel_directions(h, w)
    out = np.empty((h, w, channels), dtype=np.float64)
    for c in range(channels):
        k = rng.normal(size=(waves, 3))
        k *= rng.uniform(1.0, max_frequency, size=(waves, 1)) / np.linalg.norm(k, axis=1, keepdims=True)
        phase = rng.uniform(0.0, TWO_PI, size=waves)
        amp = rng.uniform(0.5, 1.0, size=waves)
        field = np.cos(d @ k.T + phase) @ amp / amp.sum()
        out[..., c] = 0.5 + 0.4 * field
    return out.astype(np.float32)

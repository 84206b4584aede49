"""Raster containers, resampling and file I/O.

Images are ``H x W x C`` float32 arrays with intensities in [0, 1] and
``C`` in {1, 3}.  Flow fields are ``H x W x 2`` float32 arrays of pixel
displacements ``(u, v)`` following the Middlebury convention: ``u`` is
horizontal and positive to the right, ``v`` is vertical and positive
downward.  Pixel ``(i, j)`` has its center at continuous image coordinate
``(j + 0.5, i + 0.5)``; samplers take array-index coordinates, in which
that same pixel sits at ``(x, y) = (j, i)``.
"""

import os
import struct
import uuid
from dataclasses import dataclass

import numpy as np

from ._validation import check_flow, check_image, check_positive_dims
from .exceptions import (
    BadMagicError,
    MalformedInputError,
    NonFiniteValuesError,
    ShapeMismatchError,
    TruncatedFileError,
    UnsupportedFormatError,
    UsageError,
)

FLO_MAGIC = 202021.25
_FLO_MAGIC_BYTES = struct.pack("<f", FLO_MAGIC)

# coordinates closer than this to an integer are treated as integral, so
# that trig round-off never leaks a 1e-16 blend into exact grid samples
_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class EdgePolicy:
    """How samplers treat coordinates outside the raster.

    ``horizontal`` is ``"wrap"`` (longitude is periodic) or ``"clamp"``.
    ``vertical`` is ``"reflect"`` (crossing a pole reflects the row and
    shifts the column by half the width) or ``"clamp"``.
    """

    horizontal: str = "wrap"
    vertical: str = "clamp"

    def __post_init__(self):
        if self.horizontal not in ("wrap", "clamp"):
            raise UsageError(f"unknown horizontal edge policy {self.horizontal!r}")
        if self.vertical not in ("reflect", "clamp"):
            raise UsageError(f"unknown vertical edge policy {self.vertical!r}")


WRAP_CLAMP = EdgePolicy("wrap", "clamp")
WRAP_REFLECT = EdgePolicy("wrap", "reflect")
CLAMP = EdgePolicy("clamp", "clamp")


def _atomic_write(path, payload):
    """Write to a sibling temp file, then rename over ``path``."""
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}-{uuid.uuid4().hex}"
    try:
        with open(tmp, "xb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# Middlebury .flo

def flo_bytes(flow):
    flow = check_flow(flow)
    h, w = flow.shape[:2]
    header = _FLO_MAGIC_BYTES + struct.pack("<ii", w, h)
    return header + flow.astype("<f4", copy=False).tobytes(order="C")


def parse_flo(data):
    """Decode the bytes of a .flo file into an H x W x 2 float32 array."""
    if len(data) < 4:
        raise TruncatedFileError("file shorter than the .flo magic")
    if data[:4] != _FLO_MAGIC_BYTES:
        raise BadMagicError(f"bad .flo magic {data[:4]!r}")
    if len(data) < 12:
        raise TruncatedFileError("file ends inside the .flo header")
    w, h = struct.unpack("<ii", data[4:12])
    if w < 1 or h < 1:
        raise MalformedInputError(f"invalid .flo dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(data) < expected:
        raise TruncatedFileError(
            f".flo payload truncated: {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise MalformedInputError(
            f".flo has {len(data) - expected} trailing bytes", kind="trailing-bytes")
    flow = np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=12)
    flow = flow.reshape(h, w, 2).astype(np.float32)
    if not np.all(np.isfinite(flow)):
        raise NonFiniteValuesError(".flo payload contains NaN or Inf")
    return flow


def read_flo(path):
    with open(path, "rb") as fh:
        return parse_flo(fh.read())


def write_flo(flow, path):
    _atomic_write(path, flo_bytes(flow))


# --------------------------------------------------------------------------
# Images: binary PGM/PPM (bit-exact) and PNG

def quantize(img):
    """Map [0, 1] intensities to uint8 with round-half-away-from-zero."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def _pnm_tokens(data, count):
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedInputError("PNM header ended early", kind="malformed-header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise MalformedInputError("PNM header not terminated", kind="malformed-header")
    return tokens, pos + 1


def parse_pnm(data):
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"not a binary PGM/PPM file (magic {magic!r})")
    tokens, offset = _pnm_tokens(data, 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MalformedInputError(f"non-numeric PNM header {tokens!r}",
                                  kind="malformed-header") from None
    if w < 1 or h < 1:
        raise MalformedInputError(f"invalid PNM dimensions {w}x{h}", kind="malformed-header")
    if maxval != 255:
        raise UnsupportedFormatError(f"only 8-bit PNM is supported (maxval {maxval})")
    channels = 3 if magic == b"P6" else 1
    size = w * h * channels
    if len(data) - offset < size:
        raise TruncatedFileError("PNM raster truncated")
    raw = np.frombuffer(data, dtype=np.uint8, count=size, offset=offset)
    return (raw.reshape(h, w, channels).astype(np.float32) / np.float32(255.0))


def pnm_bytes(img):
    img = check_image(img)
    h, w, c = img.shape
    magic = b"P6" if c == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + quantize(img).tobytes(order="C")


def _png_bytes(img):
    import io

    from PIL import Image as PILImage

    q = quantize(check_image(img))
    pil = PILImage.fromarray(q[:, :, 0] if q.shape[2] == 1 else q)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def read_image(path):
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] in (b"P5", b"P6"):
        return parse_pnm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        import io

        from PIL import Image as PILImage

        pil = PILImage.open(io.BytesIO(data))
        if pil.mode not in ("L", "RGB"):
            pil = pil.convert("RGB")
        arr = np.asarray(pil, dtype=np.uint8)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return arr.astype(np.float32) / np.float32(255.0)
    raise UnsupportedFormatError(f"unsupported image format: {path}")


def write_image(img, path):
    """Write ``img`` as PNG if the suffix is ``.png``, otherwise as PGM/PPM."""
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        payload = _png_bytes(img)
    else:
        payload = pnm_bytes(img)
    _atomic_write(path, payload)


# --------------------------------------------------------------------------
# Resampling

def resize_nearest(src, out_h, out_w):
    """Nearest-neighbour resize of an image or a flow field.

    A 2-channel input is treated as a flow field; its ``u`` and ``v``
    components are rescaled so displacements stay in output pixels.
    """
    check_positive_dims(out_h, out_w)
    src = np.asarray(src)
    if src.ndim == 2:
        src = src[:, :, None]
    if src.ndim != 3:
        raise ShapeMismatchError(f"expected an HxWxC raster, got shape {src.shape}")
    h, w = src.shape[:2]
    rows = ((2 * np.arange(out_h) + 1) * h) // (2 * out_h)
    cols = ((2 * np.arange(out_w) + 1) * w) // (2 * out_w)
    out = src[rows][:, cols].astype(np.float32)
    if src.shape[2] == 2 and (out_h, out_w) != (h, w):
        out[..., 0] *= np.float32(out_w / w)
        out[..., 1] *= np.float32(out_h / h)
    return out


def _snap(c):
    r = np.rint(c)
    return np.where(np.abs(c - r) < _SNAP_TOL, r, c)


def _resolve(rows, cols, h, w, policy):
    rows = np.array(rows, copy=True)
    cols = np.array(cols, copy=True)
    if policy.vertical == "reflect":
        top = rows < 0
        bottom = rows >= h
        rows[top] = -rows[top] - 1
        rows[bottom] = 2 * h - 1 - rows[bottom]
        cols[top | bottom] += w // 2
    rows = np.clip(rows, 0, h - 1)
    if policy.horizontal == "wrap":
        cols = np.mod(cols, w)
    else:
        cols = np.clip(cols, 0, w - 1)
    return rows, cols


def bilinear_sample(src, x, y, policy=WRAP_CLAMP):
    """Sample ``src`` at array-index coordinates ``(x, y)``.

    ``x`` and ``y`` broadcast against each other; the result has shape
    ``broadcast(x, y).shape + (C,)`` and is float64.  Each of the four
    neighbours is folded through ``policy`` before blending, so wrapping
    and pole reflection stay continuous.
    """
    src = np.asarray(src)
    if src.ndim == 2:
        src = src[:, :, None]
    h, w = src.shape[:2]
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                               np.asarray(y, dtype=np.float64))
    x = _snap(x)
    y = _snap(y)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    c0 = x0.astype(np.int64)
    r0 = y0.astype(np.int64)
    data = src.astype(np.float64, copy=False)

    def tap(dr, dc):
        r, c = _resolve(r0 + dr, c0 + dc, h, w, policy)
        return data[r, c]

    top = (1.0 - fx) * tap(0, 0) + fx * tap(0, 1)
    bottom = (1.0 - fx) * tap(1, 0) + fx * tap(1, 1)
    return (1.0 - fy) * top + fy * bottom


def nearest_sample(src, x, y, policy=WRAP_CLAMP):
    src = np.asarray(src)
    if src.ndim == 2:
        src = src[:, :, None]
    h, w = src.shape[:2]
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                               np.asarray(y, dtype=np.float64))
    c = np.floor(_snap(x) + 0.5).astype(np.int64)
    r = np.floor(_snap(y) + 0.5).astype(np.int64)
    r, c = _resolve(r, c, h, w, policy)
    return src.astype(np.float64, copy=False)[r, c]


def sample(src, x, y, policy=WRAP_CLAMP, interpolation="bilinear"):
    if interpolation == "bilinear":
        return bilinear_sample(src, x, y, policy)
    if interpolation == "nearest":
        return nearest_sample(src, x, y, policy)
    raise UsageError(f"unknown interpolation {interpolation!r}")


# --------------------------------------------------------------------------
# Flow visualisation

def make_colorwheel():
    """The Middlebury color wheel as an (55, 3) array of RGB in [0, 1]."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    segments = [
        (ry, lambda t: (1.0, t, 0.0)),
        (yg, lambda t: (1.0 - t, 1.0, 0.0)),
        (gc, lambda t: (0.0, 1.0, t)),
        (cb, lambda t: (0.0, 1.0 - t, 1.0)),
        (bm, lambda t: (t, 0.0, 1.0)),
        (mr, lambda t: (1.0, 0.0, 1.0 - t)),
    ]
    rows = []
    for n, color in segments:
        for k in range(n):
            rows.append(color(np.floor(255.0 * k / n) / 255.0))
    return np.array(rows, dtype=np.float64)


def flow_to_color(flow, max_magnitude=None):
    """Render a flow field with the standard optical-flow color wheel.

    Hue encodes direction and saturation encodes ``|flow| / max_magnitude``
    (clipped to 1).  ``max_magnitude`` defaults to the 99th percentile of
    the flow magnitudes.  Zero flow is white.
    """
    flow = check_flow(flow).astype(np.float64)
    # normalise -0.0 so that arctan2 picks the same branch for v == 0
    u = flow[..., 0] + 0.0
    v = flow[..., 1] + 0.0
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(np.percentile(mag, 99))
    if not max_magnitude > 0:
        max_magnitude = 1.0
    rad = np.minimum(mag / max_magnitude, 1.0)

    wheel = make_colorwheel()
    ncols = wheel.shape[0]
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64)
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = (1.0 - f) * wheel[k0] + f * wheel[k1]
    col = 1.0 - rad[..., None] * (1.0 - col)
    return np.clip(col, 0.0, 1.0).astype(np.float32)

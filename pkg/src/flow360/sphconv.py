"""Latitude-adaptive convolution with fitted kernel projections.

On an equirectangular feature map distortion depends only on the row, so
the rows are split into groups of ``n_g`` rows that each get their own
kernel.  A group's kernel is produced from a source (perspective) kernel
by a projection matrix ``P_g``, and neighbouring groups overlap by
``n_l`` rows where their outputs are blended linearly.  The matrices are
fitted so that the grouped convolution of augmented inputs reproduces the
source convolution of the original inputs.

Kernels have shape ``(kh, kw, c_in, c_out)`` and compute a
cross-correlation.  Feature maps are ``(H, W, C)`` or batches
``(N, H, W, C)``.  Arithmetic is float64; public results are float32.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_feature_batch
from .exceptions import (
    BadMagicError,
    DivergenceError,
    MalformedInputError,
    ShapeMismatchError,
    TruncatedFileError,
    UsageError,
)
from .raster import WRAP_CLAMP, bilinear_sample
from .sphere import omega_sample_coords

PADDINGS = ("zero", "wrap")


def check_kernel(k, name="kernel"):
    k = np.asarray(k, dtype=np.float64)
    if k.ndim == 2:
        k = k[:, :, None, None]
    if k.ndim != 4:
        raise ShapeMismatchError(f"{name} must be kh x kw x c_in x c_out, got {k.shape}")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ShapeMismatchError(f"{name} must have odd spatial size, got {k.shape[:2]}")
    if not np.all(np.isfinite(k)):
        raise UsageError(f"{name} contains non-finite values")
    return k


def _pad(x, ph, pw, padding):
    if padding not in PADDINGS:
        raise UsageError(f"unknown padding {padding!r}")
    x = np.pad(x, ((0, 0), (ph, ph), (0, 0), (0, 0)))
    if padding == "wrap":
        return np.pad(x, ((0, 0), (0, 0), (pw, pw), (0, 0)), mode="wrap")
    return np.pad(x, ((0, 0), (0, 0), (pw, pw), (0, 0)))


def _shifted(x, th, tw, padding):
    """Yield ``(a, b, window)`` with window[n, i, j] = xpad[n, i + a, j + b]."""
    n, h, w, _ = x.shape
    xp = _pad(x, th // 2, tw // 2, padding)
    for a in range(th):
        for b in range(tw):
            yield a, b, xp[:, a:a + h, b:b + w, :]


def _conv64(x, k, padding):
    out = np.zeros(x.shape[:3] + (k.shape[3],))
    for a, b, win in _shifted(x, k.shape[0], k.shape[1], padding):
        out += win @ k[a, b]
    return out


def conv2d(x, k, padding="wrap"):
    """Same-size cross-correlation.

    ``padding="zero"`` pads with zeros on all sides; ``"wrap"`` wraps the
    columns around (longitude is periodic) and zero-pads the rows.
    """
    single = np.ndim(x) == 3
    x = check_feature_batch(x)
    k = check_kernel(k)
    if x.shape[3] != k.shape[2]:
        raise ShapeMismatchError(
            f"input has {x.shape[3]} channels but kernel expects {k.shape[2]}")
    out = _conv64(x, k, padding).astype(np.float32)
    return out[0] if single else out


# --------------------------------------------------------------------------
# Row groups

@dataclass(frozen=True)
class RowGroupPlan:
    h: int
    n_g: int
    n_l: int = 3
    ranges: tuple = field(init=False)

    def __post_init__(self):
        if self.h < 1 or self.n_g < 1 or self.n_l < 0:
            raise UsageError(f"invalid row-group plan h={self.h} n_g={self.n_g} n_l={self.n_l}")
        if self.h % self.n_g:
            raise UsageError(f"n_g={self.n_g} does not divide h={self.h}")
        groups = self.h // self.n_g
        if groups > 1 and self.n_l > self.n_g:
            raise UsageError(f"interleave n_l={self.n_l} exceeds group size n_g={self.n_g}")
        ranges = []
        for r in range(groups):
            start = r * self.n_g
            end = start + self.n_g + (self.n_l if r < groups - 1 else 0)
            ranges.append((start, end))
        object.__setattr__(self, "ranges", tuple(ranges))

    @property
    def n_transform(self):
        return len(self.ranges)

    def tile(self, r):
        """Rows owned by group ``r`` alone for loss bookkeeping."""
        return r * self.n_g, (r + 1) * self.n_g

    def blend_weights(self):
        """``(n_transform, h)`` weights; columns sum to 1.

        Inside an overlap, group ``r`` ramps down and group ``r + 1`` ramps
        up with steps of ``1 / (n_l + 1)``.
        """
        wts = np.zeros((self.n_transform, self.h))
        ramp = np.arange(1, self.n_l + 1) / (self.n_l + 1)
        for r in range(self.n_transform):
            start, end = self.tile(r)
            wts[r, start:end] = 1.0
            if r > 0 and self.n_l:
                wts[r, start:start + self.n_l] = ramp
                wts[r - 1, start:start + self.n_l] = 1.0 - ramp
        return wts


def rowgroup_partition(h, n_g, n_l=3):
    return RowGroupPlan(int(h), int(n_g), int(n_l))


def _blend(outputs, plan):
    """Combine per-group full-height outputs according to ``plan``."""
    out = np.array(outputs[0], copy=True)
    for r in range(1, plan.n_transform):
        start, end = plan.tile(r)
        prev = outputs[r - 1]
        cur = outputs[r]
        ov = min(plan.n_l, end - start)
        for t in range(ov):
            i = start + t
            a = (t + 1) / (plan.n_l + 1)
            # prev + a * (cur - prev) is exact when both agree
            out[:, i] = prev[:, i] + a * (cur[:, i] - prev[:, i])
        out[:, start + ov:end] = cur[:, start + ov:end]
    return out


def _interleaved64(x, kernels, plan, padding):
    outputs = []
    cache = []
    for k in kernels:
        for kk, y in cache:
            if kk is k or np.array_equal(kk, k):
                outputs.append(y)
                break
        else:
            y = _conv64(x, k, padding)
            cache.append((k, y))
            outputs.append(y)
    return _blend(outputs, plan)


def interleaved_conv(x, kernels, plan, padding="wrap"):
    """Row-grouped convolution with one kernel per group of ``plan``."""
    single = np.ndim(x) == 3
    x = check_feature_batch(x)
    kernels = [check_kernel(k) for k in kernels]
    if len(kernels) != plan.n_transform:
        raise ShapeMismatchError(
            f"plan has {plan.n_transform} groups but {len(kernels)} kernels were given")
    if len({k.shape for k in kernels}) != 1:
        raise ShapeMismatchError("all group kernels must share one shape")
    if x.shape[1] != plan.h:
        raise ShapeMismatchError(f"plan is for h={plan.h} but input has h={x.shape[1]}")
    if x.shape[3] != kernels[0].shape[2]:
        raise ShapeMismatchError("kernel input channels do not match the features")
    out = _interleaved64(x, kernels, plan, padding).astype(np.float32)
    return out[0] if single else out


# --------------------------------------------------------------------------
# Projection matrices

@dataclass(frozen=True)
class ProjectionMatrixSet:
    """One matrix per row group mapping a flattened source kernel to a target kernel.

    ``matrices[g]`` has shape ``(th_g * tw_g, kh * kw)``.
    """

    matrices: tuple
    source_shape: tuple
    target_shapes: tuple

    def __post_init__(self):
        kh, kw = self.source_shape
        mats = tuple(np.asarray(m, dtype=np.float32) for m in self.matrices)
        if len(mats) != len(self.target_shapes):
            raise ShapeMismatchError("one target shape per matrix is required")
        for m, (th, tw) in zip(mats, self.target_shapes):
            if m.shape != (th * tw, kh * kw):
                raise ShapeMismatchError(
                    f"matrix of shape {m.shape} does not map {kh}x{kw} to {th}x{tw}")
            if th % 2 == 0 or tw % 2 == 0:
                raise ShapeMismatchError("target kernels must have odd size")
            if not np.all(np.isfinite(m)):
                raise UsageError("projection matrix has non-finite entries")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "source_shape", tuple(int(s) for s in self.source_shape))
        object.__setattr__(self, "target_shapes",
                           tuple(tuple(int(s) for s in t) for t in self.target_shapes))

    def __len__(self):
        return len(self.matrices)

    @classmethod
    def embedding(cls, n_groups, source_shape, target_shape=None):
        """Matrices that place the source kernel at the center of the target."""
        kh, kw = source_shape
        th, tw = target_shape or source_shape
        m = np.zeros((th * tw, kh * kw))
        oa, ob = th // 2 - kh // 2, tw // 2 - kw // 2
        for a in range(kh):
            for b in range(kw):
                ta, tb = a + oa, b + ob
                if 0 <= ta < th and 0 <= tb < tw:
                    m[ta * tw + tb, a * kw + b] = 1.0
        return cls(tuple(m.copy() for _ in range(n_groups)), (kh, kw),
                   tuple((th, tw) for _ in range(n_groups)))

    def to_vector(self):
        return np.concatenate([m.astype(np.float64).ravel() for m in self.matrices])

    @classmethod
    def from_vector(cls, vec, source_shape, target_shapes):
        kk = source_shape[0] * source_shape[1]
        mats = []
        pos = 0
        for th, tw in target_shapes:
            size = th * tw * kk
            mats.append(np.asarray(vec[pos:pos + size]).reshape(th * tw, kk))
            pos += size
        return cls(tuple(mats), source_shape, tuple(target_shapes))


def _project64(mats, target_shapes, k):
    kh, kw, cin, cout = k.shape
    flat = k.reshape(kh * kw, cin * cout)
    return [(np.asarray(m, dtype=np.float64) @ flat).reshape(th, tw, cin, cout)
            for m, (th, tw) in zip(mats, target_shapes)]


def apply_projection(p, k):
    """Per-group target kernels ``P_g @ vec(k)`` for every channel pair."""
    k = check_kernel(k)
    if tuple(k.shape[:2]) != p.source_shape:
        raise ShapeMismatchError(
            f"projections expect a {p.source_shape} kernel, got {k.shape[:2]}")
    return [kg.astype(np.float32) for kg in _project64(p.matrices, p.target_shapes, k)]


# --------------------------------------------------------------------------
# Losses

def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"feature maps differ in shape: {a.shape} vs {b.shape}")
    return a, b


def layer_l2_loss(y_src, y_tgt):
    """Sum of squared differences."""
    a, b = _check_pair(y_src, y_tgt)
    return float(np.sum((a - b) ** 2))


def rowgroup_loss(y_src, y_tgt, plan):
    """Mean over row groups of the squared error on each group's own rows."""
    a, b = _check_pair(y_src, y_tgt)
    if a.ndim == 3:
        a, b = a[None], b[None]
    if a.ndim != 4 or a.shape[1] != plan.h:
        raise ShapeMismatchError(f"feature maps of shape {a.shape} do not fit plan h={plan.h}")
    sq = (a - b) ** 2
    losses = [sq[:, s:e].sum() for s, e in (plan.tile(r) for r in range(plan.n_transform))]
    return float(np.mean(losses))


# --------------------------------------------------------------------------
# Fitting

@dataclass
class FitResult:
    projections: ProjectionMatrixSet
    loss_trace: list
    final_loss: float
    degenerate: bool
    method: str

    def __iter__(self):
        return iter((self.projections, self.loss_trace))


def _omega_features(y):
    n, h, w, _ = y.shape
    x, yy = omega_sample_coords(h, w)
    return np.stack([bilinear_sample(f, x, yy, WRAP_CLAMP) for f in y])


def source_targets(x_src, k_src, padding="wrap", correspondence="identity"):
    """Source-layer outputs mapped onto the augmented grid."""
    y = _conv64(check_feature_batch(x_src), check_kernel(k_src), padding)
    if correspondence == "identity":
        return y
    if correspondence == "omega":
        return _omega_features(y)
    raise UsageError(f"unknown correspondence {correspondence!r}")


def _design(x, k, target_shape, padding):
    """Features ``phi[n, i, j, o, t, m]`` with ``conv(x, P k) = phi . vec(P)``."""
    kh, kw, cin, cout = k.shape
    th, tw = target_shape
    kmat = k.reshape(kh * kw, cin, cout)
    n, h, w, _ = x.shape
    phi = np.empty((n, h, w, cout, th * tw, kh * kw))
    for a, b, win in _shifted(x, th, tw, padding):
        phi[..., a * tw + b, :] = np.einsum("nhwc,mco->nhwom", win, kmat)
    return phi.reshape(n, h, w, cout, th * tw * kh * kw)


class _Problem:
    """Quadratic form of the row-group loss in the stacked projection vector."""

    def __init__(self, x_aug, k_src, target, plan, target_shape, padding):
        self.x = x_aug
        self.k = k_src
        self.target = target
        self.plan = plan
        self.padding = padding
        self.source_shape = k_src.shape[:2]
        self.target_shapes = tuple(target_shape for _ in range(plan.n_transform))
        self.phi = _design(x_aug, k_src, target_shape, padding)
        self.weights = plan.blend_weights()
        d = self.phi.shape[-1]
        g = plan.n_transform
        self.dim = d
        grams = np.empty((plan.h, d, d))
        rhs = np.empty((plan.h, d))
        for i in range(plan.h):
            rows = self.phi[:, i].reshape(-1, d)
            grams[i] = rows.T @ rows
            rhs[i] = rows.T @ target[:, i].reshape(-1)
        self.A = np.zeros((g * d, g * d))
        self.b = np.zeros(g * d)
        for r in range(g):
            self.b[r * d:(r + 1) * d] = np.tensordot(self.weights[r], rhs, axes=1)
            for s in range(r, g):
                ws = self.weights[r] * self.weights[s]
                if not ws.any():
                    continue
                block = np.tensordot(ws, grams, axes=1)
                self.A[r * d:(r + 1) * d, s * d:(s + 1) * d] = block
                self.A[s * d:(s + 1) * d, r * d:(r + 1) * d] = block.T
        self.c = float(np.sum(target ** 2))

    def quadratic_loss(self, p):
        return float((p @ self.A @ p - 2.0 * self.b @ p + self.c) / self.plan.n_transform)

    def quadratic_grad(self, p):
        return 2.0 * (self.A @ p - self.b) / self.plan.n_transform

    def forward(self, p):
        mats = _split(np.asarray(p, dtype=np.float64), self.source_shape, self.target_shapes)
        kernels = _project64(mats, self.target_shapes, self.k)
        return _interleaved64(self.x, kernels, self.plan, self.padding)

    def loss(self, p):
        return rowgroup_loss(self.forward(p), self.target, self.plan)

    def gradient(self, p):
        """Analytic gradient from the residual of the forward pass."""
        resid = self.forward(p) - self.target
        d = self.dim
        grad = np.empty(self.plan.n_transform * d)
        for r in range(self.plan.n_transform):
            weighted = resid * self.weights[r][None, :, None, None]
            grad[r * d:(r + 1) * d] = np.einsum("nhwod,nhwo->d", self.phi, weighted)
        return 2.0 * grad / self.plan.n_transform

    def lipschitz(self, iters=100, seed=0):
        """Largest eigenvalue of the gradient's linear part, by power iteration."""
        v = np.random.default_rng(seed).normal(size=self.A.shape[0])
        lam = 0.0
        for _ in range(iters):
            w = self.A @ v
            norm = np.linalg.norm(w)
            if norm == 0.0:
                return 0.0
            lam = norm / np.linalg.norm(v)
            v = w / norm
        return 2.0 * lam / self.plan.n_transform


def _split(vec, source_shape, target_shapes):
    kk = source_shape[0] * source_shape[1]
    mats = []
    pos = 0
    for th, tw in target_shapes:
        size = th * tw * kk
        mats.append(vec[pos:pos + size].reshape(th * tw, kk))
        pos += size
    return mats


def build_problem(x_src, x_aug, k_src, plan, target_shape=None, padding="wrap",
                  correspondence="identity"):
    xs = check_feature_batch(x_src, "x_src")
    xa = check_feature_batch(x_aug, "x_aug")
    k = check_kernel(k_src, "k_src")
    if xs.shape != xa.shape:
        raise ShapeMismatchError(f"x_src {xs.shape} and x_aug {xa.shape} differ")
    if xs.shape[3] != k.shape[2]:
        raise ShapeMismatchError("kernel input channels do not match the features")
    if xs.shape[1] != plan.h:
        raise ShapeMismatchError(f"plan is for h={plan.h} but features have h={xs.shape[1]}")
    target_shape = tuple(target_shape or k.shape[:2])
    if target_shape[0] % 2 == 0 or target_shape[1] % 2 == 0:
        raise ShapeMismatchError("target kernel size must be odd")
    target = source_targets(xs, k, padding, correspondence)
    return _Problem(xa, k, target, plan, target_shape, padding)


def fit_transform(x_src, x_aug, k_src, plan, method="least-squares", step=None, iters=500,
                  tol=1e-12, target_shape=None, padding="wrap", correspondence="identity",
                  ridge=1e-8):
    """Fit one projection matrix per row group.

    The fitted matrices turn ``k_src`` into group kernels whose interleaved
    convolution of ``x_aug`` matches ``conv2d(x_src, k_src)`` (mapped through
    ``correspondence``) in the row-group loss.

    ``method="least-squares"`` solves the ridge-regularised normal equations
    in one step; its trace holds the single resulting loss.
    ``method="gradient-descent"`` starts from the centered embedding and
    takes steps of ``step`` (default ``1 / L`` with ``L`` from power
    iteration), recording the loss before every step.  It stops once the
    loss changes by less than ``tol`` and raises :class:`DivergenceError`
    after five consecutive increases larger than ``tol``.
    """
    prob = build_problem(x_src, x_aug, k_src, plan, target_shape, padding, correspondence)
    g = plan.n_transform
    scale = max(prob.phi.shape[0] * prob.phi.shape[1] * prob.phi.shape[2] * prob.phi.shape[3], 1)
    degenerate = not np.trace(prob.A) > 0.0

    if method == "least-squares":
        # normalise to per-observation scale so the ridge is dimensionless
        lam, vecs = np.linalg.eigh(prob.A / scale)
        lam = np.clip(lam, 0.0, None)
        p = vecs @ ((vecs.T @ (prob.b / scale)) / (lam + ridge))
        trace = [prob.quadratic_loss(p)]
    elif method == "gradient-descent":
        p = ProjectionMatrixSet.embedding(g, prob.source_shape, prob.target_shapes[0]).to_vector()
        lip = prob.lipschitz()
        if step is None:
            step = 1.0 / lip if lip > 0 else 0.0
        trace = [prob.quadratic_loss(p)]
        rises = 0
        for _ in range(int(iters)):
            p = p - step * prob.quadratic_grad(p)
            loss = prob.quadratic_loss(p)
            if not np.isfinite(loss):
                raise DivergenceError("loss became non-finite during gradient descent")
            change = loss - trace[-1]
            trace.append(loss)
            rises = rises + 1 if change > tol else 0
            if rises >= 5:
                raise DivergenceError(
                    f"loss increased for 5 consecutive iterations (step={step:g})")
            if abs(change) <= tol * max(1.0, abs(loss)):
                break
    else:
        raise UsageError(f"unknown fitting method {method!r}")

    projections = ProjectionMatrixSet.from_vector(p, prob.source_shape, prob.target_shapes)
    final = prob.loss(projections.to_vector())
    return FitResult(projections, trace, final, degenerate, method)


def gradient_check(problem, p, h=1e-5):
    """Analytic and central-difference gradients of the row-group loss."""
    p = np.asarray(p, dtype=np.float64)
    analytic = problem.gradient(p)
    numeric = np.empty_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        numeric[i] = (problem.loss(p + e) - problem.loss(p - e)) / (2.0 * h)
    return analytic, numeric


# --------------------------------------------------------------------------
# Binary containers (little-endian): magic, uint32 version, dims, float32 payload

KERNEL_MAGIC = b"F3KN"
PROJECTION_MAGIC = b"F3PM"
_VERSION = 1


def kernel_bytes(k):
    k = check_kernel(k)
    header = KERNEL_MAGIC + struct.pack("<5I", _VERSION, *k.shape)
    return header + k.astype("<f4").tobytes(order="C")


def parse_kernel(data):
    if data[:4] != KERNEL_MAGIC:
        raise BadMagicError(f"bad kernel magic {data[:4]!r}")
    if len(data) < 24:
        raise TruncatedFileError("kernel header truncated")
    version, kh, kw, cin, cout = struct.unpack("<5I", data[4:24])
    if version != _VERSION:
        raise MalformedInputError(f"unsupported kernel container version {version}")
    count = kh * kw * cin * cout
    if len(data) != 24 + 4 * count:
        raise TruncatedFileError("kernel payload size does not match its header")
    k = np.frombuffer(data, dtype="<f4", count=count, offset=24).reshape(kh, kw, cin, cout)
    return check_kernel(k).astype(np.float32)


def projection_bytes(p):
    parts = [PROJECTION_MAGIC,
             struct.pack("<4I", _VERSION, len(p), *p.source_shape)]
    parts += [struct.pack("<2I", *t) for t in p.target_shapes]
    parts += [m.astype("<f4").tobytes(order="C") for m in p.matrices]
    return b"".join(parts)


def parse_projections(data):
    if data[:4] != PROJECTION_MAGIC:
        raise BadMagicError(f"bad projection magic {data[:4]!r}")
    if len(data) < 20:
        raise TruncatedFileError("projection header truncated")
    version, n, kh, kw = struct.unpack("<4I", data[4:20])
    if version != _VERSION:
        raise MalformedInputError(f"unsupported projection container version {version}")
    pos = 20
    if len(data) < pos + 8 * n:
        raise TruncatedFileError("projection shape table truncated")
    shapes = [struct.unpack("<2I", data[pos + 8 * g:pos + 8 * g + 8]) for g in range(n)]
    pos += 8 * n
    mats = []
    for th, tw in shapes:
        count = th * tw * kh * kw
        if len(data) < pos + 4 * count:
            raise TruncatedFileError("projection payload truncated")
        mats.append(np.frombuffer(data, dtype="<f4", count=count, offset=pos)
                    .reshape(th * tw, kh * kw))
        pos += 4 * count
    if pos != len(data):
        raise MalformedInputError("trailing bytes after projection payload")
    return ProjectionMatrixSet(tuple(mats), (kh, kw), tuple(shapes))


def _write(payload, path):
    from .raster import _atomic_write

    _atomic_write(path, payload)


def write_kernel(k, path):
    _write(kernel_bytes(k), path)


def read_kernel(path):
    with open(path, "rb") as fh:
        return parse_kernel(fh.read())


def write_projections(p, path):
    _write(projection_bytes(p), path)


def read_projections(path):
    with open(path, "rb") as fh:
        return parse_projections(fh.read())


# --------------------------------------------------------------------------
# Estimator

class KernelTransformer(BaseEstimator):
    """Learns row-group projection matrices for a fixed source kernel.

    ``fit(X_src, X_aug)`` fits the matrices (``X_aug`` defaults to
    ``X_src``); ``transform(X)`` runs the interleaved convolution with the
    fitted group kernels; ``score`` is the negative row-group loss.
    """

    def __init__(self, kernel=None, n_g=8, n_l=3, method="least-squares", target_shape=None,
                 padding="wrap", correspondence="identity", step=None, iters=500, tol=1e-12,
                 ridge=1e-8):
        self.kernel = kernel
        self.n_g = n_g
        self.n_l = n_l
        self.method = method
        self.target_shape = target_shape
        self.padding = padding
        self.correspondence = correspondence
        self.step = step
        self.iters = iters
        self.tol = tol
        self.ridge = ridge

    def fit(self, X_src, X_aug=None):
        if self.kernel is None:
            raise UsageError("KernelTransformer needs a source kernel")
        X_src = check_feature_batch(X_src, "X_src")
        X_aug = X_src if X_aug is None else X_aug
        self.plan_ = rowgroup_partition(X_src.shape[1], self.n_g, self.n_l)
        res = fit_transform(X_src, X_aug, self.kernel, self.plan_, method=self.method,
                            step=self.step, iters=self.iters, tol=self.tol,
                            target_shape=self.target_shape, padding=self.padding,
                            correspondence=self.correspondence, ridge=self.ridge)
        self.projections_ = res.projections
        self.kernels_ = apply_projection(res.projections, self.kernel)
        self.loss_trace_ = res.loss_trace
        self.final_loss_ = res.final_loss
        self.degenerate_ = res.degenerate
        return self

    def transform(self, X):
        check_is_fitted(self, "projections_")
        return interleaved_conv(X, self.kernels_, self.plan_, self.padding)

    def score(self, X_src, X_aug=None):
        check_is_fitted(self, "projections_")
        X_aug = X_src if X_aug is None else X_aug
        target = source_targets(X_src, self.kernel, self.padding, self.correspondence)
        pred = interleaved_conv(X_aug, self.kernels_, self.plan_, self.padding)
        return -rowgroup_loss(pred, target, self.plan_)

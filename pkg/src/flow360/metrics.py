"""Endpoint-error metrics and their line-delimited JSON records."""

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_flow, check_mask, check_same_hw
from .exceptions import UsageError
from .sphere import wrap_horizontal


@dataclass
class MetricReport:
    name: str
    value: float
    count: int
    aux: dict = field(default_factory=dict)

    def to_record(self):
        rec = {"name": self.name, "value": self.value, "count": self.count}
        rec.update(self.aux)
        return rec

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=False)


def _valid(mask, shape):
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = check_mask(mask)
    if mask.shape != shape:
        raise UsageError(f"mask shape {mask.shape} does not match flow {shape}")
    # 1 marks an occluded pixel, which is left out of the mean
    return mask == 0


def _report(name, dist, valid):
    count = int(valid.sum())
    if count == 0:
        raise UsageError(f"{name}: mask leaves no pixels to evaluate")
    return MetricReport(name, float(dist[valid].mean()), count)


def epe(pred, gt, mask=None):
    """Mean endpoint error over pixels where ``mask`` is 0 (all if None)."""
    pred = check_flow(pred, "pred").astype(np.float64)
    gt = check_flow(gt, "gt").astype(np.float64)
    check_same_hw(pred, gt, names=("pred", "gt"))
    d = pred - gt
    return _report("epe", np.hypot(d[..., 0], d[..., 1]), _valid(mask, pred.shape[:2]))


def wrapped_epe(pred, gt, mask=None):
    """Endpoint error with the horizontal difference taken modulo the width."""
    pred = check_flow(pred, "pred").astype(np.float64)
    gt = check_flow(gt, "gt").astype(np.float64)
    check_same_hw(pred, gt, names=("pred", "gt"))
    w = pred.shape[1]
    du = wrap_horizontal(pred[..., 0] - gt[..., 0], w)
    dv = pred[..., 1] - gt[..., 1]
    return _report("wrapped_epe", np.hypot(du, dv), _valid(mask, pred.shape[:2]))


def latitude_band_report(pred, gt, bands):
    """One :func:`wrapped_epe` report per horizontal band, top to bottom."""
    pred = check_flow(pred, "pred")
    gt = check_flow(gt, "gt")
    h, _ = check_same_hw(pred, gt, names=("pred", "gt"))
    if bands < 1 or h % bands:
        raise UsageError(f"bands={bands} must be a positive divisor of h={h}")
    size = h // bands
    reports = []
    for b in range(bands):
        rep = wrapped_epe(pred[b * size:(b + 1) * size], gt[b * size:(b + 1) * size])
        rep.aux["band_index"] = b
        reports.append(rep)
    return reports


def write_records(reports, fh):
    for rep in reports:
        fh.write(rep.to_json() + "\n")


def read_records(lines):
    return [json.loads(line) for line in lines if line.strip()]

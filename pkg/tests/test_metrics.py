import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flow360.exceptions import ShapeMismatchError, UsageError
from flow360.metrics import (
    MetricReport,
    epe,
    latitude_band_report,
    read_records,
    write_records,
    wrapped_epe,
)

from conftest import random_flow


def test_epe_three_four_five():
    gt = np.zeros((2, 3, 2))
    pred = np.zeros((2, 3, 2))
    pred[..., 0] = 3.0
    pred[..., 1] = 4.0
    rep = epe(pred, gt)
    assert rep.value == 5.0 and rep.count == 6 and rep.name == "epe"


def test_epe_mask_matches_loop(rng):
    pred = random_flow(rng, 5, 7, scale=3.0)
    gt = random_flow(rng, 5, 7, scale=3.0)
    mask = (rng.uniform(size=(5, 7)) < 0.4).astype(np.uint8)
    vals = [math.hypot(float(pred[i, j, 0]) - float(gt[i, j, 0]),
                       float(pred[i, j, 1]) - float(gt[i, j, 1]))
            for i in range(5) for j in range(7) if mask[i, j] == 0]
    rep = epe(pred, gt, mask)
    assert rep.count == len(vals)
    assert rep.value == pytest.approx(sum(vals) / len(vals), rel=1e-12)


def test_fully_masked_is_an_error():
    z = np.zeros((2, 2, 2))
    with pytest.raises(UsageError):
        epe(z, z, np.ones((2, 2)))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        epe(np.zeros((2, 2, 2)), np.zeros((2, 3, 2)))


@pytest.mark.parametrize("du, want", [(16.0, 0.0), (15.0, 1.0), (-17.0, 1.0), (8.0, 8.0)])
def test_wrapped_epe_cases(du, want):
    w = 16
    gt = np.zeros((2, w, 2))
    pred = gt.copy()
    pred[..., 0] = du
    assert wrapped_epe(pred, gt).value == pytest.approx(want)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_wrapped_never_exceeds_plain(seed):
    rng = np.random.default_rng(seed)
    pred = random_flow(rng, 4, 8, scale=20.0)
    gt = random_flow(rng, 4, 8, scale=20.0)
    assert wrapped_epe(pred, gt).value <= epe(pred, gt).value + 1e-12
    assert epe(pred, gt).value == pytest.approx(epe(gt, pred).value, rel=1e-12)
    assert wrapped_epe(pred, gt).value == pytest.approx(wrapped_epe(gt, pred).value, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1, 2, 4, 8]))
def test_band_means_combine_to_global(seed, bands):
    rng = np.random.default_rng(seed)
    pred = random_flow(rng, 8, 16, scale=5.0)
    gt = random_flow(rng, 8, 16, scale=5.0)
    reps = latitude_band_report(pred, gt, bands)
    assert [r.aux["band_index"] for r in reps] == list(range(bands))
    total = sum(r.value * r.count for r in reps) / sum(r.count for r in reps)
    assert total == pytest.approx(wrapped_epe(pred, gt).value, rel=1e-12)


def test_band_count_must_divide():
    z = np.zeros((6, 12, 2))
    with pytest.raises(UsageError):
        latitude_band_report(z, z, 4)


def test_records_round_trip():
    reps = [MetricReport("epe", 1.5, 10), MetricReport("wrapped_epe", 0.5, 4, {"band_index": 2})]
    buf = io.StringIO()
    write_records(reps, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 2
    recs = read_records(lines)
    assert recs[0] == {"name": "epe", "value": 1.5, "count": 10}
    assert recs[1]["band_index"] == 2

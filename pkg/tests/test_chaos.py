import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from availsim.chaos import (
    CSV_HEADER,
    REFERENCE_BIAS,
    ChaosConfig,
    ProbeOutcome,
    ProbeOutcomes,
    calibrate_noise,
    expected_recorded,
    live_availability,
    round_robin_schedule,
    run_chaos,
)
from availsim.core import EndpointSpec
from availsim.errors import ValidationError


def small(**kw):
    base = dict(failure_fractions=(0.25,), chunks=4, windows_per_chunk=50, probes_per_window=20)
    base.update(kw)
    return ChaosConfig(**base)


def g0_single():
    return [EndpointSpec("r", "F", ("A",))]


def test_full_rescue_records_everything(g0):
    out = run_chaos(g0, g0_single(), small(retry_rescue_prob=1.0), {"F"})
    assert out.recorded.all()
    assert not out.structural.all()


def test_noise_off_records_structure(g0):
    out = run_chaos(g0, g0_single(), small(), {"F"})
    assert (out.recorded == out.structural).all()
    # one probe route and k=1 of 4 eligible: A dies in about a quarter of windows
    assert abs(out.structural.mean() - 0.75) < 0.1


def test_mixture_closed_form():
    assert expected_recorded(0.75, 0.2, 0.0) == pytest.approx(0.60)
    assert expected_recorded(0.75, 0.0, 1.0) == pytest.approx(1.0)


def test_gray_failure_matches_mixture(g0):
    cfg = small(windows_per_chunk=500, probes_per_window=40, gray_failure_prob=0.2)
    out = run_chaos(g0, g0_single(), cfg, {"F"})
    a = out.structural.mean()
    n = len(out)
    assert abs(out.recorded.mean() - expected_recorded(a, 0.2, 0.0)) <= 4 * math.sqrt(0.25 / n)


def test_deterministic(g0):
    a = run_chaos(g0, g0_single(), small(gray_failure_prob=0.1), {"F"})
    b = run_chaos(g0, g0_single(), small(gray_failure_prob=0.1), {"F"})
    assert list(a) == list(b)
    c = run_chaos(g0, g0_single(), small(gray_failure_prob=0.1, master_seed=8), {"F"})
    assert list(a) != list(c)


def test_canonical_order_and_size(g0):
    cfg = small(failure_fractions=(0.25, 0.5), chunks=2, windows_per_chunk=3, probes_per_window=4)
    out = run_chaos(g0, g0_single(), cfg, {"F"})
    assert len(out) == 2 * 2 * 3 * 4
    keys = [(o.p_fail, o.chunk, o.window, o.probe_index) for o in out]
    assert keys == sorted(keys)


def test_csv_round_trip(tmp_path, g0):
    eps = [EndpointSpec("GET /a", "F", ("A",)), EndpointSpec("GET /b", "F", ("B",))]
    out = run_chaos(g0, eps, small(gray_failure_prob=0.3), {"F"})
    path = tmp_path / "live.csv"
    out.write_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    back = ProbeOutcomes.read_csv(path)
    assert list(back) == list(out)


def test_csv_header_checked(tmp_path):
    path = tmp_path / "live.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValidationError, match="header"):
        ProbeOutcomes.read_csv(path)


def synthetic(n, successes, p=0.5, route="r"):
    return ProbeOutcomes.from_records([
        ProbeOutcome(p, 0, i, 0, route, i < successes, i < successes) for i in range(n)
    ])


def test_live_availability_interval():
    rows = live_availability(synthetic(100, 75))
    route = next(r for r in rows if r.route == "r")
    assert route.estimate == 0.75
    assert (route.ci_high - route.ci_low) / 2 == pytest.approx(0.0849, abs=1e-4)
    agg = next(r for r in rows if r.route == "aggregate")
    assert (agg.probes, agg.successes) == (100, 75)


def test_live_interval_clamped():
    row = live_availability(synthetic(50, 50))[0]
    assert (row.estimate, row.ci_low, row.ci_high) == (1.0, 1.0, 1.0)


def test_large_stratum_standard_error():
    n = 500_000
    assert math.sqrt(0.25 / n) == pytest.approx(7.07e-4, abs=1e-6)
    row = live_availability(synthetic(n, n // 2))[0]
    assert (row.ci_high - row.ci_low) / 2 == pytest.approx(1.96 * 7.071e-4, rel=1e-3)


def test_live_by_chunk(g0):
    out = run_chaos(g0, g0_single(), small(), {"F"})
    rows = live_availability(out, by_chunk=True)
    assert {r.chunk for r in rows} == {0, 1, 2, 3}
    assert all(r.probes == 50 * 20 for r in rows)


def test_empty_outcomes_rejected():
    with pytest.raises(ValidationError):
        live_availability(synthetic(0, 0))


@pytest.mark.parametrize("weights, n, counts", [
    ([1, 1], 10, [5, 5]),
    ([3, 1], 100, [75, 25]),
    ([1, 2, 7], 10, [1, 2, 7]),
])
def test_round_robin_counts(weights, n, counts):
    sched = round_robin_schedule(weights, n)
    assert [sched.count(i) for i in range(len(weights))] == counts


def test_round_robin_is_smooth():
    assert round_robin_schedule([1, 1, 1], 6) == [0, 1, 2, 0, 1, 2]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=6).filter(lambda w: sum(w) > 0),
       st.integers(1, 300))
def test_round_robin_tracks_weights(weights, n):
    sched = round_robin_schedule(weights, n)
    total = sum(weights)
    for i, w in enumerate(weights):
        assert abs(sched.count(i) - n * w / total) < len(weights)


def test_missing_probe_weight(g0):
    with pytest.raises(ValidationError, match="missing probe weight"):
        run_chaos(g0, g0_single(), small(probe_weights={"other": 1}), {"F"})


@pytest.mark.parametrize("kwargs", [
    {"chunks": 0}, {"gray_failure_prob": 1.5}, {"retry_rescue_prob": -0.1},
    {"failure_fractions": (0.0,)},
])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        ChaosConfig(**kwargs)


def test_noise_direction(g0):
    base = run_chaos(g0, g0_single(), small(), {"F"}).recorded.mean()
    rescued = run_chaos(g0, g0_single(), small(retry_rescue_prob=0.5), {"F"}).recorded.mean()
    gray = run_chaos(g0, g0_single(), small(gray_failure_prob=0.5), {"F"}).recorded.mean()
    assert gray < base < rescued


def test_calibration_recovers_known_noise():
    model = {0.1: 0.78, 0.3: 0.61, 0.5: 0.36, 0.7: 0.25, 0.9: 0.05}
    target = {p: a * 0.1 - (1 - a) * 0.2 for p, a in model.items()}
    gray, rescue = calibrate_noise(model, target)
    assert (gray, rescue) == pytest.approx((0.1, 0.2))


def test_calibration_against_reference_bias():
    model = {0.1: 0.781, 0.3: 0.610, 0.5: 0.356, 0.7: 0.251, 0.9: 0.050}
    gray, rescue = calibrate_noise(model)
    assert 0 < gray < 1 and 0 < rescue < 1
    fitted = {p: a * gray - (1 - a) * rescue for p, a in model.items()}
    for p in (0.1, 0.3):
        assert fitted[p] > 0
    for p in (0.7, 0.9):
        assert fitted[p] < 0
    assert np.sign(REFERENCE_BIAS[0.1]) == 1


def test_calibration_needs_two_points():
    with pytest.raises(ValidationError):
        calibrate_noise({0.1: 0.5}, {0.1: 0.0})

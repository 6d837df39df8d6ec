import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from behavdyn.coordination import (
    ExperimentDesign,
    HkbParams,
    SpringParams,
    TemperatureProtocol,
    antiphase_boundary,
    circadian_T0,
    condition_epsilon,
    epsilon,
    fixed_points,
    hkb_drift,
    hkb_potential,
    integrate_phase,
    simulate_spring,
    spring_accel,
    spring_energy,
    synthetic_experiment,
    thermo_coefficients,
)
from behavdyn.core import RandomStream
from behavdyn.errors import InvalidArgumentError
from behavdyn.metrics import circular_stats, histogram_probs, shannon_entropy

# -- spring --------------------------------------------------------------------


@pytest.mark.parametrize("p, x, v, expected", [
    (SpringParams(1, 0, 1), 0.0, 0.0, 0.0),
    (SpringParams(1, 0, 1), 1.0, 0.0, -1.0),
    (SpringParams(2, 1, 3), 1.0, 1.0, -2.0),
])
def test_spring_accel(p, x, v, expected):
    assert spring_accel(x, v, p) == expected


def test_spring_matches_closed_form():
    p = SpringParams(m=1.0, b=2.0, k=1.0 + 4.0 * math.pi ** 2)
    dt, n = 1e-4, 50_000
    xs = simulate_spring(p, 1.0, -1.0, dt, n)[:, 0]
    t = dt * np.arange(n + 1)
    assert np.max(np.abs(xs - np.exp(-t) * np.cos(2 * np.pi * t))) < 1e-3


def test_spring_conserves_energy_without_damping():
    p = SpringParams(1.0, 0.0, 1.0)
    out = simulate_spring(p, 1.0, 0.0, 1e-3, int(2 * math.pi / 1e-3))
    e = spring_energy(out[:, 0], out[:, 1], p)
    assert np.max(np.abs(e / e[0] - 1.0)) < 1e-3


@pytest.mark.parametrize("b", [0.1, 1.0, 5.0])
def test_spring_energy_non_increasing_with_damping(b):
    p = SpringParams(1.0, b, 4.0)
    out = simulate_spring(p, 1.0, 0.5, 1e-3, 5000)
    e = spring_energy(out[:, 0], out[:, 1], p)
    assert np.all(np.diff(e) <= 1e-9)


def test_spring_at_rest_stays_at_rest():
    assert np.all(simulate_spring(SpringParams(1, 0.3, 2), 0.0, 0.0, 0.01, 100) == 0.0)


# -- relative phase ------------------------------------------------------------


@pytest.mark.parametrize("phi, expected", [(0.0, -1.5), (math.pi, 0.5), (math.pi / 2, 0.5)])
def test_potential_values(phi, expected):
    # a = 1, b = 0.5: -a-b, a-b, b
    assert hkb_potential(phi, 1.0, 0.5) == pytest.approx(expected, abs=1e-15)


@given(st.floats(-2, 2), st.floats(0, 2), st.floats(-1, 1), st.floats(-1, 1))
def test_drift_vanishes_at_zero_and_pi(a, b, c, d):
    p = HkbParams(a=abs(a), b=b, c=c, d=d)
    assert hkb_drift(0.0, p) == 0.0
    assert abs(hkb_drift(math.pi, p)) < 1e-14


@given(st.floats(-math.pi, math.pi), st.floats(0, 3), st.floats(0, 3), st.floats(-2, 2))
def test_drift_is_negative_gradient(phi, a, b, dw):
    h = 1e-5
    grad = (hkb_potential(phi + h, a, b) - hkb_potential(phi - h, a, b)) / (2 * h)
    assert abs(hkb_drift(phi, HkbParams(a=a, b=b, delta_omega=dw)) - (dw - grad)) < 1e-6


def test_noiseless_zero_series():
    s = integrate_phase(HkbParams(Q=0.0), 0.0, 0.01, 500, RandomStream(1))
    assert np.all(s.samples == 0.0)


def test_converges_to_inphase():
    s = integrate_phase(HkbParams(a=1, b=1), 0.3, 0.005, 2000, RandomStream(0))
    assert abs(s.samples[-1]) < 1e-3
    assert np.all(np.diff(s.samples) < 0)


@given(st.floats(0.01, math.pi / 2 - 0.01))
@settings(max_examples=20)
def test_monotone_decay_from_first_quadrant(phi0):
    s = integrate_phase(HkbParams(a=1, b=1), phi0, 0.005, 400, RandomStream(0)).samples
    assert np.all(np.diff(s) <= 0)
    assert s[-1] >= 0.0


def test_noiseless_independent_of_seed():
    p = HkbParams(a=1, b=0.3, d=0.1, delta_omega=0.4)
    a = integrate_phase(p, 1.0, 0.01, 300, RandomStream(1)).samples
    b = integrate_phase(p, 1.0, 0.01, 300, RandomStream(2)).samples
    assert a.tobytes() == b.tobytes()


def test_more_noise_more_spread():
    wins = 0
    for rep in range(50):
        sds = []
        for Q in (0.05, 0.2):
            s = integrate_phase(HkbParams(a=1, b=0.5, Q=Q), 0.0, 0.01, 2000,
                                RandomStream(rep)).samples[500:]
            sds.append(circular_stats(s).sd_phi)
        wins += sds[1] > sds[0]
    assert wins == 50


def _slope(phi, p, h=1e-6):
    return (hkb_drift(phi + h, p) - hkb_drift(phi - h, p)) / (2 * h)


def test_fixed_points_bistable():
    p = HkbParams(a=1, b=1)
    pts = fixed_points(p)
    stable = [r for r, s in pts if s]
    assert len(stable) == 2
    assert min(abs(r) for r in stable) < 1e-9
    assert min(abs(abs(r) - math.pi) for r in stable) < 1e-9
    assert _slope(0.0, p) == pytest.approx(-5.0, abs=1e-6)
    assert _slope(math.pi, p) == pytest.approx(-3.0, abs=1e-6)


def test_antiphase_unstable_for_small_b():
    p = HkbParams(a=1, b=0.2)
    assert _slope(math.pi, p) == pytest.approx(0.2, abs=1e-6)
    near_pi = [s for r, s in fixed_points(p) if abs(abs(r) - math.pi) < 1e-6]
    assert near_pi == [False]


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 2), st.floats(0.0, 2), st.floats(-1, 1), st.floats(-0.5, 0.5),
       st.floats(-1, 1))
def test_fixed_points_are_roots_and_alternate(a, b, c, d, dw):
    p = HkbParams(a=a, b=b, c=c, d=d, delta_omega=dw)
    pts = fixed_points(p)
    for r, _ in pts:
        assert -math.pi <= r < math.pi
        assert abs(hkb_drift(r, p)) < 1e-9
    flags = [s for _, s in pts]
    if len(flags) % 2 == 0 and flags:
        assert all(flags[i] != flags[(i + 1) % len(flags)] for i in range(len(flags)))


def test_antiphase_boundary():
    assert abs(antiphase_boundary(a=1.0) - 0.25) < 0.02


# -- temperature protocol ------------------------------------------------------


@pytest.mark.parametrize("hour, expected", [(5.0, 36.3), (17.0, 37.3), (11.0, 36.8)])
def test_circadian_extremes(hour, expected):
    assert circadian_T0(hour) == pytest.approx(expected, abs=1e-12)


@given(st.integers(0, 95).map(lambda q: q / 4.0))
def test_circadian_period(h):
    assert abs(circadian_T0(h) - circadian_T0((h + 24.0) % 24.0)) == 0.0


def test_hour_range_checked():
    with pytest.raises(InvalidArgumentError):
        circadian_T0(24.0)


@pytest.mark.parametrize("T, T0, expected", [(36.5, 36.5, 0.0), (37.5, 36.5, 1.0), (35.5, 36.5, -1.0)])
def test_epsilon(T, T0, expected):
    assert epsilon(T, T0) == pytest.approx(expected, abs=1e-12)


# frozen values of the documented vest mapping (swing = amplitude + |offset|)
@pytest.mark.parametrize("hour, condition, expected", [
    (5.0, "NORMAL", 0.5), (5.0, "HEAT", 1.5), (5.0, "ICE", 1.5),
    (17.0, "NORMAL", -0.5), (17.0, "HEAT", -1.5), (17.0, "ICE", -1.5),
    (11.0, "HEAT", 0.0),
])
def test_condition_epsilon(hour, condition, expected):
    assert condition_epsilon(hour, condition) == pytest.approx(expected, abs=1e-12)


def test_thermo_coefficients():
    proto = TemperatureProtocol(gain_d=0.1)
    assert thermo_coefficients(0.0, 0.3, 0.05, proto) == (0.3, 0.05)
    assert thermo_coefficients(1.0, 0.0, 0.05, proto)[1] == pytest.approx(0.15, abs=1e-15)


@given(st.floats(-3, 3), st.floats(-1, 1), st.floats(-1, 1))
def test_thermo_coefficients_affine(eps, gc, gd):
    proto = TemperatureProtocol(gain_c=gc, gain_d=gd)
    d = lambda e: thermo_coefficients(e, 0.1, 0.2, proto)[1]  # noqa: E731
    assert d(2 * eps) - d(0.0) == pytest.approx(2 * (d(eps) - d(0.0)), abs=1e-12)


# -- synthetic experiment ------------------------------------------------------


def test_degenerate_design_is_noiseless_and_converges():
    design = ExperimentDesign(circadian_points=(12.0,), participants=1, trials_per_point=1)
    rows = synthetic_experiment(design, HkbParams(a=1, b=1, Q=0.0), TemperatureProtocol(), 3,
                                duration=10.0, jitter=0.0, phi0=0.4)
    assert len(rows) == 1
    assert abs(rows[0].series.samples[-1]) < 1e-3


def test_table_design_count_and_order():
    rows = synthetic_experiment(ExperimentDesign(), HkbParams(Q=0.5), TemperatureProtocol(), 1,
                                duration=1.0)
    assert len(rows) == 192
    keys = [(r.participant, ExperimentDesign().circadian_points.index(r.hour), r.trial) for r in rows]
    assert keys == sorted(keys)
    assert rows[0].participant == 1 and rows[0].trial == 1


def test_conditions_share_noise():
    base = dict(circadian_points=(12.0,), participants=2, trials_per_point=2)
    a = synthetic_experiment(ExperimentDesign(condition="NORMAL", **base), HkbParams(Q=0.5),
                             TemperatureProtocol(), 9, duration=2.0)
    b = synthetic_experiment(ExperimentDesign(condition="HEAT", **base), HkbParams(Q=0.5),
                             TemperatureProtocol(), 9, duration=2.0)
    assert [r.series.seed for r in a] == [r.series.seed for r in b]
    # epsilon is zero at 11:00 only, so at noon the vest changes d and the paths differ
    assert not np.array_equal(a[0].series.samples, b[0].series.samples)


def _mean_entropy(rows, hour):
    return np.mean([shannon_entropy(histogram_probs(r.series.samples).probs).h_bits
                    for r in rows if r.hour == hour])


@pytest.mark.parametrize("seed", range(3))
def test_dawn_entropy_exceeds_dusk(seed):
    design = ExperimentDesign(circadian_points=(5.0, 17.0), participants=4, trials_per_point=3)
    rows = synthetic_experiment(design, HkbParams(a=1, b=0.5, Q=0.5), TemperatureProtocol(), seed)
    assert _mean_entropy(rows, 5.0) > _mean_entropy(rows, 17.0)

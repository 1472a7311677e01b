import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imcsca.device import (NO_VARIATION, TYPICAL_VARIATION, ParameterError, RramParams, RramState, VariationSpec,
                           rram_resistance, rram_switch_step, sample_instance, selector_current)

P = RramParams()


def test_resistance_endpoints():
    assert rram_resistance(0.1) == pytest.approx(58.9e3, rel=1e-9)
    assert rram_resistance(1.7) == pytest.approx(6.7e6, rel=1e-9)


def test_resistance_midpoint_is_geometric_mean():
    oracle = math.sqrt(58.9e3 * 6.7e6)
    assert oracle == pytest.approx(628.2e3, rel=1e-3)
    assert rram_resistance(0.9) == pytest.approx(oracle, rel=1e-9)


def test_non_finite_gap_rejected():
    with pytest.raises(ParameterError):
        rram_resistance(float("nan"))


@given(st.floats(0.1, 1.7), st.floats(0.1, 1.7))
def test_resistance_monotone(a, b):
    if a < b:
        assert rram_resistance(a) < rram_resistance(b)


def test_no_motion_below_threshold():
    s = RramState(np.array([1.7, 0.9, 0.1]))
    out = rram_switch_step(s, 0.0, 1e-6)
    assert np.array_equal(out.gap, s.gap)


def _write(duration, dt=0.05e-9, v=2.4):
    s = RramState(np.array([P.gap_max]))
    for _ in range(int(round(duration / dt))):
        s = rram_switch_step(s, v, dt)
    return s


def test_full_set_in_write_latency():
    s = _write(25e-9)
    assert s.gap[0] == pytest.approx(P.gap_min, abs=1e-9)
    assert _write(24e-9).gap[0] > P.gap_min


def test_half_latency_is_between_states():
    s = _write(12.5e-9)
    r = rram_resistance(s.gap[0])
    assert P.gap_min < s.gap[0] < P.gap_max
    assert P.r_lrs < r < P.r_hrs


def test_reset_direction():
    s = RramState(np.array([P.gap_min]))
    for _ in range(1000):
        s = rram_switch_step(s, -2.4, 0.05e-9)
    assert s.gap[0] == pytest.approx(P.gap_max)


def test_dt_must_be_positive():
    with pytest.raises(ParameterError):
        rram_switch_step(RramState(np.array([1.0])), 2.4, 0.0)


def test_selector_cuts_off():
    assert selector_current(0.3, 1e3) == 0.0
    assert selector_current(-0.3, 1e3) == 0.0
    assert selector_current(1.2, 58.9e3) > 0


def test_zero_variation_is_nominal():
    inst = sample_instance(NO_VARIATION, 5)
    assert np.all(inst.lrs_gap == P.gap_min)
    assert np.all(inst.hrs_gap == P.gap_max)
    assert inst.drive_scale == 1.0
    assert np.all(inst.bl_cap_scale == 1.0)


def test_lrs_spread_matches_three_sigma_fraction():
    gaps = np.concatenate([sample_instance(TYPICAL_VARIATION, s, n_cells=1).lrs_gap for s in range(1000)])
    rel = gaps.std() / gaps.mean()
    assert rel == pytest.approx(0.07 / 3, rel=0.10)


def test_same_seed_same_instance():
    a, b = sample_instance(TYPICAL_VARIATION, 42), sample_instance(TYPICAL_VARIATION, 42)
    assert np.array_equal(a.lrs_gap, b.lrs_gap) and np.array_equal(a.hrs_gap, b.hrs_gap)
    assert a.drive_scale == b.drive_scale


def test_variation_spec_bounds():
    with pytest.raises(ParameterError):
        VariationSpec(lrs_gap=0.6)


@settings(max_examples=30)
@given(st.floats(0.2, 3.0), st.floats(1e-12, 5e-9))
def test_switch_step_stays_in_bounds(v, dt):
    s = RramState(np.array([P.gap_min, P.gap_mid, P.gap_max]))
    out = rram_switch_step(s, v, dt)
    assert np.all(out.gap >= P.gap_min) and np.all(out.gap <= P.gap_max)
    assert np.all(out.gap <= s.gap)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from tgcmpc.errors import DomainError, InvalidParameterError
from tgcmpc.tire import TireParams, conic_bound_check, derive, lateral_force

FRONT = TireParams(C=100000.0, mu=0.8, R_mu=0.85, Fz=6842.4)


def test_q_and_k_mu_match_hand_values():
    d = derive(FRONT)
    assert d.q == pytest.approx(2.3077, abs=1e-4)
    assert d.k_mu == pytest.approx(0.8580, abs=1e-4)


def test_full_dynamic_friction_simplifies():
    d = derive(TireParams(C=1e5, mu=0.9, R_mu=1.0, Fz=5000.0))
    assert d.q == pytest.approx(3.0, rel=1e-12)
    assert d.k_mu == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("bad", [dict(C=-1.0), dict(Fz=0.0), dict(mu=0.0), dict(R_mu=1.2), dict(R_mu=0.0)])
def test_invalid_parameters(bad):
    kw = dict(C=1e5, mu=0.8, R_mu=0.85, Fz=5000.0) | bad
    with pytest.raises(InvalidParameterError):
        derive(TireParams(**kw))


def test_injected_peak_must_precede_full_sliding():
    d = derive(FRONT)
    with pytest.raises(InvalidParameterError):
        derive(FRONT, alpha_peak=d.alpha_sat * 1.01)


def test_zero_slip_gives_zero_force():
    assert lateral_force(derive(FRONT), 0.0) == 0.0


def test_peak_matches_numerical_maximum():
    d = derive(FRONT)
    res = minimize_scalar(lambda a: lateral_force(d, a), bounds=(1e-4, d.alpha_sat), method="bounded", options={"xatol": 1e-12})
    assert -res.fun == pytest.approx(d.F_peak, rel=1e-6)
    assert lateral_force(d, d.alpha_peak) == pytest.approx(-d.F_peak, rel=1e-2)


def test_sliding_branch():
    d = derive(FRONT)
    p = FRONT
    assert lateral_force(d, 2 * d.alpha_sat) == pytest.approx(-p.mu * p.R_mu * p.Fz)
    assert lateral_force(d, -2 * d.alpha_sat) == pytest.approx(p.mu * p.R_mu * p.Fz)


def test_jump_at_full_sliding_has_closed_form():
    d = derive(FRONT)
    inside = abs(lateral_force(d, d.alpha_sat * (1 - 1e-12)))
    outside = abs(lateral_force(d, d.alpha_sat * (1 + 1e-12)))
    assert inside - outside == pytest.approx(d.sliding_jump, rel=1e-6)
    assert d.sliding_jump == pytest.approx(770.3, abs=0.5)


def test_force_is_continuous_for_unit_friction_ratio():
    d = derive(TireParams(C=1e5, mu=0.8, R_mu=1.0, Fz=5000.0))
    assert d.sliding_jump == pytest.approx(0.0, abs=1e-9)
    a = d.alpha_sat
    assert lateral_force(d, a * (1 - 1e-12)) == pytest.approx(lateral_force(d, a * (1 + 1e-12)), rel=1e-9)


@given(st.floats(-1.0, 1.0, allow_nan=False))
def test_force_is_odd(alpha):
    d = derive(FRONT)
    assert lateral_force(d, -alpha) == pytest.approx(-lateral_force(d, alpha), abs=1e-9)


@given(st.floats(1e-6, 0.25))
def test_force_opposes_slip(alpha):
    d = derive(FRONT)
    assert lateral_force(d, alpha) < 0


def test_gamma_limits():
    d = derive(FRONT)
    assert conic_bound_check(d, 1e-7) == pytest.approx(1.0, abs=1e-4)
    assert conic_bound_check(d, d.alpha_peak) == pytest.approx(-1.0, abs=1e-3)


def test_gamma_sweep_stays_in_band():
    d = derive(FRONT)
    a = np.linspace(d.alpha_peak / 1e4, d.alpha_peak, 10_000)
    assert np.max(np.abs(conic_bound_check(d, a))) <= 1 + 1e-9


def test_gamma_domain():
    d = derive(FRONT)
    with pytest.raises(DomainError):
        conic_bound_check(d, 0.0)
    with pytest.raises(DomainError):
        conic_bound_check(d, 1.01 * d.alpha_peak)


def test_cone_center_and_width():
    d = derive(FRONT)
    assert d.C_bar + d.dC == pytest.approx(d.C)
    assert d.C_bar - d.dC == pytest.approx(d.C_peak)


def test_small_angle_peak_slope_estimate():
    d = derive(FRONT)
    assert d.C_peak_approx == pytest.approx(d.C_peak, rel=0.03)
    assert math.tan(d.alpha_peak) == pytest.approx(d.q * d.params.mu * d.params.Fz / (d.k_mu * d.C))

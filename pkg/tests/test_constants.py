import math
import time

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracground.constants import (
    ConstantsReport, Params, beta_integral, blowup_constants, bubble_moments, crit_exponent,
    gamma_ratio, lambda_printed, lambda_star, log_moment_closed_form, radial_power_integral,
    sobolev_closed_form, sphere_area,
)

# (N, s): lambda, S, int U^2*, int U^2, int U^2* ln U, blowup_L, A_thm
# frozen from a 30-digit mpmath evaluation of the Gamma/Beta closed forms
GOLDEN = {
    (1, 0.2): (0.24803641965386126, 0.90503657501044201, 0.77922939380728555, 2.8085379527617853,
               -0.32407239439617317, 8.0094456140668648, 645.82819129901750),
    (2, 0.3): (1.0812060025585754, 1.4773725678010061, 3.6725419809729544, 9.1813549524323859,
               -2.5707793866810681, 3.0612244897959184, 279.32319845911743),
    (3, 0.4): (2.0274064943093122, 2.2394941607514464, 20.561853190950098, 54.668450526598026,
               -20.046239991045512, 2.6367586932391657, 151.87599071969497),
    (3, 0.5): (2.0, 2.7025676900634902, 19.739208802178717, 78.956835208714869,
               -17.494749454339108, 6.0, 288.0),
}


@pytest.mark.parametrize("key", sorted(GOLDEN))
def test_report_matches_golden(key):
    rep = blowup_constants(Params(*key))
    lam, S, crit, l2, logm, L, A = GOLDEN[key]
    assert rep.lambda_star == pytest.approx(lam, rel=1e-13)
    assert rep.sobolev_S == pytest.approx(S, rel=1e-12)
    assert rep.bubble_crit_mass == pytest.approx(crit, rel=1e-12)
    assert rep.bubble_l2_mass == pytest.approx(l2, rel=1e-12)
    assert rep.bubble_log_moment == pytest.approx(logm, rel=1e-9)
    assert rep.blowup_L == pytest.approx(L, rel=1e-12)
    assert rep.A_thm == pytest.approx(A, rel=1e-12)
    assert rep.discrepancy_ratio == pytest.approx(A / L, rel=1e-12)


def test_half_order_three_dims_is_rational():
    rep = blowup_constants(Params(3, 0.5))
    assert rep.lambda_star == pytest.approx(2.0, rel=1e-15)
    assert rep.bubble_l2_mass == pytest.approx(8 * math.pi**2, rel=1e-13)
    assert rep.blowup_L == pytest.approx(6.0, rel=1e-13)
    assert rep.blowup_L_literal == pytest.approx(36.0, rel=1e-13)
    assert rep.A_thm == pytest.approx(288.0, rel=1e-13)
    assert rep.A_asy6 == pytest.approx(288.0 * gamma_ratio(Params(3, 0.5)) ** 3)


def test_printed_width_agrees_only_at_half():
    assert lambda_printed(Params(3, 0.5)) == pytest.approx(lambda_star(Params(3, 0.5)), rel=1e-15)
    assert abs(lambda_printed(Params(1, 0.2)) / lambda_star(Params(1, 0.2)) - 1) > 0.5


@pytest.mark.parametrize("key", sorted(GOLDEN))
def test_sobolev_constant_equals_sharp_closed_form(key):
    p = Params(*key)
    assert bubble_moments(p).sobolev_S == pytest.approx(sobolev_closed_form(p), rel=1e-12)


def test_gamma_ratio_against_mpmath():
    for N, s in [(1, 0.2), (2, 0.45), (3, 0.9)]:
        ref = mp.gamma(mp.mpf(N + 2 * s) / 2) / mp.gamma(mp.mpf(N - 2 * s) / 2)
        assert gamma_ratio(Params(N, s)) == pytest.approx(float(ref), rel=1e-13)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_beta_integral_divergent():
    with pytest.raises(ValueError):
        beta_integral(3, 1.5)


@given(N=st.sampled_from([1, 2, 3]), extra=st.floats(0.15, 4.0))
def test_beta_integral_matches_radial_quadrature(N, extra):
    a = N / 2 + extra
    val, err = radial_power_integral(N, a)
    assert val == pytest.approx(beta_integral(N, a), rel=1e-9)


@given(N=st.sampled_from([1, 2, 3]))
def test_log_moment_closed_form_is_derivative_of_beta(N):
    a, h = float(N), 1e-5
    fd = -(beta_integral(N, a + h) - beta_integral(N, a - h)) / (2 * h)
    assert log_moment_closed_form(N, a) == pytest.approx(fd, rel=1e-7)


@pytest.mark.parametrize("bad", [(4, 0.2), (1, 0.0), (1, 1.0), (1, 0.5), (1, 0.7)])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        Params(*bad)


def test_moments_need_l2_regime():
    with pytest.raises(ValueError):
        bubble_moments(Params(1, 0.3))  # N <= 4s


def test_regime_flags_and_exponent():
    p = Params(1, 0.15)
    assert p.regime6s and p.regime4s
    assert crit_exponent(p) == pytest.approx(2 / 0.7)
    assert p.max_eps() == pytest.approx(2 / 0.7 - 2)


def test_csv_row_round_trips_exactly():
    rep = blowup_constants(Params(2, 0.3))
    cols = rep.csv_row().split(",")
    assert len(cols) == len(ConstantsReport.CSV_COLUMNS)
    assert float(cols[3]) == rep.lambda_star
    assert float(cols[8]) == rep.blowup_L


def test_runtime_under_one_second():
    t = time.perf_counter()
    for key in GOLDEN:
        blowup_constants(Params(*key))
    assert time.perf_counter() - t < 1.0


@given(s=st.floats(0.05, 0.24))
def test_crit_mass_is_power_of_S(s):
    rep = bubble_moments(Params(1, s))
    assert rep.bubble_crit_mass == pytest.approx(rep.sobolev_S ** (1 / (2 * s)), rel=1e-10)
    assert np.isfinite(rep.bubble_log_moment) and rep.bubble_log_moment < 0

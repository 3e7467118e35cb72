import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from fracground.bubble import BubbleSpec, bubble_field, kernel_modes
from fracground.constants import Params, bubble_moments, crit_exponent
from fracground.field import Field, Grid, integrate_field
from fracground.operator import (
    bessel_kernel_profile, bessel_resolvent, frac_lap, frac_lap_operator, gagliardo_direct_1d,
    kernel_mass, linearized_apply, loglog_slope, low_spectrum, seminorm_s,
)


def _smooth_random(g: Grid, seed: int) -> Field:
    rng = np.random.default_rng(seed)
    k2 = sum(np.meshgrid(*([g.wavenumbers**2] * g.dim), indexing="ij"))
    c = (rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)) * np.exp(-k2)
    return Field(g, np.fft.ifftn(c).real)


def _pair(u, v):
    return integrate_field(u.values * v.values, u.grid)


def test_single_mode_half_laplacian():
    L = 3.0
    g = Grid(1, L, 64)
    u = Field(g, np.cos(math.pi * g.axis / L))
    out = frac_lap(u, 0.5)
    assert np.allclose(out.values, (math.pi / L) * u.values, atol=1e-13)


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_constant_maps_to_zero(s):
    g = Grid(2, 1.0, 16)
    assert np.abs(frac_lap(Field.constant(g, 3.0), s).values).max() < 1e-13
    assert seminorm_s(Field.constant(g, 3.0), s) == pytest.approx(0.0, abs=1e-20)


def test_bubble_residual_shrinks_as_box_grows():
    # the residual is dominated by periodic truncation of the r^(2s-N) tail
    p = Params(1, 0.2)
    q = crit_exponent(p)
    out = []
    for L, M in ((40.0, 4096), (160.0, 16384)):
        g = Grid(1, L, M)
        U = bubble_field(BubbleSpec(p), g)
        r = frac_lap(U, p.s).values - U.values ** (q - 1)
        out.append(np.abs(r[np.abs(g.axis) <= L / 2]).max())
    assert out[1] < out[0] / 3


@pytest.mark.xfail(strict=True, reason="periodic truncation at L=40 leaves [U]_s^2 about 19% short")
def test_bubble_seminorm_matches_critical_mass():
    p = Params(1, 0.2)
    U = bubble_field(BubbleSpec(p), Grid(1, 40.0, 4096))
    assert seminorm_s(U, p.s) == pytest.approx(bubble_moments(p).bubble_crit_mass, rel=0.01)


def test_bubble_seminorm_approaches_critical_mass_with_box():
    p = Params(1, 0.2)
    target = bubble_moments(p).bubble_crit_mass
    errs = [abs(seminorm_s(bubble_field(BubbleSpec(p), Grid(1, L, M)), p.s) / target - 1)
            for L, M in ((40.0, 4096), (160.0, 16384))]
    assert errs[1] < errs[0]


@given(t=st.floats(-20, 20), seed=st.integers(0, 1000))
def test_seminorm_quadratic_homogeneity(t, seed):
    u = _smooth_random(Grid(1, 4.0, 64), seed)
    assert seminorm_s(u.scaled(t), 0.3) == pytest.approx(t * t * seminorm_s(u, 0.3), rel=1e-12, abs=1e-300)


@given(seed=st.integers(0, 10**6), s=st.floats(0.05, 0.95), dim=st.sampled_from([1, 2]))
def test_self_adjoint(seed, s, dim):
    g = Grid(dim, 3.0, 32)
    u, v = _smooth_random(g, seed), _smooth_random(g, seed + 1)
    a, b = _pair(frac_lap(u, s), v), _pair(u, frac_lap(v, s))
    scale = math.sqrt(_pair(frac_lap(u, s), frac_lap(u, s)) * _pair(v, v))
    assert abs(a - b) <= 1e-12 * scale


@given(seed=st.integers(0, 10**6), s=st.floats(0.05, 0.5), t=st.floats(0.05, 0.5))
def test_symbol_composition(seed, s, t):
    u = _smooth_random(Grid(1, 3.0, 64), seed)
    lhs = frac_lap(frac_lap(u, s), t).values
    rhs = frac_lap(u, s + t).values
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())


@given(seed=st.integers(0, 10**6), s=st.floats(0.05, 0.95))
def test_seminorm_is_quadratic_form(seed, s):
    u = _smooth_random(Grid(2, 3.0, 16), seed)
    val = seminorm_s(u, s)
    assert val >= 0
    assert val == pytest.approx(_pair(frac_lap(u, s), u), rel=1e-11, abs=1e-300)


@pytest.mark.parametrize("s", [0.3, 0.5])
def test_multiplier_matches_direct_double_integral(s):
    g = Grid(1, 40.0, 2048)
    u = np.exp(-g.axis**2 / 2)
    direct = gagliardo_direct_1d(u, g.h, g.half_width, s)
    multiplier = seminorm_s(Field(g, u), s)
    assert multiplier == pytest.approx(direct, rel=0.01)
    assert direct == pytest.approx(special.gamma(s + 0.5), rel=0.01)  # int |xi|^2s e^-xi^2 dxi / 2pi * 2pi


def test_resolvent_basics():
    g = Grid(1, 2.0, 32)
    k = Field.constant(g, 2.5)
    assert np.allclose(bessel_resolvent(k, 0.4, 1.0).values, 2.5)
    u = _smooth_random(g, 3)
    r = bessel_resolvent(u, 0.4, 2.0)
    back = frac_lap(r, 0.4).values + 2.0 * r.values
    assert np.abs(back - u.values).max() < 1e-13 * max(1, np.abs(u.values).max())
    # largest gain is at the zero mode: 1/c
    assert np.allclose(bessel_resolvent(k, 0.4, 4.0).values, 2.5 / 4.0)
    with pytest.raises(ValueError):
        bessel_resolvent(k, 0.4, 0.0)


# (1/pi) int_0^inf cos(r xi) / (1 + xi^0.6) dxi, mpmath quadosc at 30 digits
KERNEL_1D_S03 = {1.0: 0.070037724197461989, 20.0: 0.0014978648785479806}


def test_kernel_profile_against_oscillatory_quadrature():
    p = Params(1, 0.3)
    for r, ref in KERNEL_1D_S03.items():
        assert bessel_kernel_profile([r], p)[0] == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("N,s", [(1, 0.3), (2, 0.3), (3, 0.5)])
def test_kernel_positive_with_unit_mass(N, s):
    p = Params(N, s)
    r = np.geomspace(1e-3, 1e3, 30)
    assert np.all(bessel_kernel_profile(r, p) > 0)
    assert kernel_mass(p) == pytest.approx(1.0, abs=1e-3)


def test_kernel_asymptotic_exponents_far_out():
    # the power laws hold only where r^(2s) corrections are negligible
    p = Params(1, 0.3)
    near = np.geomspace(1e-8, 1e-7, 10)
    far = np.geomspace(1e4, 1e5, 10)
    assert loglog_slope(near, bessel_kernel_profile(near, p)) == pytest.approx(-(p.N - 2 * p.s), rel=0.05)
    assert loglog_slope(far, bessel_kernel_profile(far, p)) == pytest.approx(-(p.N + 2 * p.s), rel=0.05)


def test_kernel_profile_rejects_bad_radii():
    with pytest.raises(ValueError):
        bessel_kernel_profile([0.0, 1.0], Params(1, 0.3))
    with pytest.raises(ValueError):
        bessel_kernel_profile([2.0, 1.0], Params(1, 0.3))


def test_linearised_operator_on_kernel_and_bubble():
    p = Params(1, 0.2)
    q = crit_exponent(p)
    res = []
    for L, M in ((40.0, 4096), (160.0, 16384)):
        g = Grid(1, L, M)
        spec = BubbleSpec(p)
        U = bubble_field(spec, g)
        dU = kernel_modes(spec, g, normalize=False)[0]
        r = linearized_apply(dU, p, U).values
        res.append(np.abs(r[np.abs(g.axis) <= L / 2]).max())
        # L U = -(2*_s - 2) U^(2*_s - 1) up to the bubble-equation residual
        LU = linearized_apply(U, p, U).values
        pred = -(q - 2) * U.values ** (q - 1)
        assert np.abs(LU - pred)[np.abs(g.axis) <= L / 2].max() < 2e-2
    assert res[0] < 1e-2 and res[1] < res[0]


def test_linearised_grid_mismatch():
    p = Params(1, 0.2)
    U = bubble_field(BubbleSpec(p), Grid(1, 10.0, 64))
    with pytest.raises(ValueError):
        linearized_apply(Field.constant(Grid(1, 10.0, 128), 1.0), p, U)


def test_low_spectrum_of_fractional_laplacian():
    g = Grid(1, 5.0, 64)
    pairs = low_spectrum(frac_lap_operator(g, 0.5), 3, g, 0.5)
    assert abs(pairs[0].value) < 1e-9
    v = pairs[0].vector.values
    assert np.allclose(v / v[0], 1.0, atol=1e-8)
    assert integrate_field(v**2, g) == pytest.approx(1.0)
    assert pairs[1].value == pytest.approx(math.pi / 5.0, rel=1e-8)


def test_low_spectrum_preconditions():
    g = Grid(1, 5.0, 32)
    with pytest.raises(ValueError):
        low_spectrum(frac_lap_operator(g, 0.5), 13, g, 0.5)
    skew = np.triu(np.ones((32, 32)))
    with pytest.raises(ValueError):
        low_spectrum(lambda x: skew @ x, 2, g, 0.5)


@pytest.mark.xfail(strict=True, reason="residual 0.017 is set by periodic truncation and does not fall with M")
def test_bubble_residual_reference_resolution():
    p = Params(1, 0.2)
    q = crit_exponent(p)
    res = []
    for M in (4096, 8192):
        g = Grid(1, 40.0, M)
        U = bubble_field(BubbleSpec(p), g)
        r = frac_lap(U, p.s).values - U.values ** (q - 1)
        res.append(np.abs(r[np.abs(g.axis) <= 20.0]).max())
    assert res[0] < 1e-2 and res[1] <= res[0] / 2


@pytest.mark.xfail(strict=True, reason="on [5, 50] the far slope is -1.43; -(N+2s) is only reached for r >~ 1e3")
def test_kernel_far_slope_on_reference_window():
    p = Params(1, 0.3)
    r = np.geomspace(5, 50, 20)
    assert loglog_slope(r, bessel_kernel_profile(r, p)) == pytest.approx(-(p.N + 2 * p.s), rel=0.05)


@pytest.mark.xfail(strict=True, reason="on [0.01, 0.1] the near slope is -0.63; -(N-2s) is only reached for r <~ 1e-6")
def test_kernel_near_slope_on_reference_window():
    p = Params(1, 0.3)
    r = np.geomspace(0.01, 0.1, 20)
    assert loglog_slope(r, bessel_kernel_profile(r, p)) == pytest.approx(-(p.N - 2 * p.s), rel=0.05)


def test_dilation_mode_in_kernel_at_reference_resolution():
    p = Params(1, 0.2)
    g = Grid(1, 40.0, 4096)
    spec = BubbleSpec(p)
    U = bubble_field(spec, g)
    r = linearized_apply(kernel_modes(spec, g, normalize=False)[-1], p, U).values
    assert np.abs(r[np.abs(g.axis) <= 20.0]).max() < 1e-2

"""Closed-form and quadrature evaluation of the Gamma-function constants.

Everything here is a pure function of the dimension ``N`` and the order ``s``.
The bubble normalised by ``U(0) = 1`` is

    U(x) = (1 + |x|^2 / lambda^2)^((2s - N)/2),

and every moment of it reduces to the Beta-type integral

    int_{R^N} (1 + |y|^2)^(-a) dy = pi^(N/2) Gamma(a - N/2) / Gamma(a).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import integrate, special

SUPPORTED_DIMS = (1, 2, 3)


@dataclass(frozen=True)
class Params:
    """Dimension ``N`` and fractional order ``s`` with derived exponents."""

    N: int
    s: float

    def __post_init__(self):
        if self.N not in SUPPORTED_DIMS:
            raise ValueError(f"dimension must be one of {SUPPORTED_DIMS}, got {self.N}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"order s must lie in (0, 1), got {self.s}")
        if self.N <= 2 * self.s:
            raise ValueError(f"need N > 2s, got N={self.N}, s={self.s}")

    @property
    def two_star(self) -> float:
        return 2.0 * self.N / (self.N - 2.0 * self.s)

    @property
    def regime4s(self) -> bool:
        return self.N > 4 * self.s

    @property
    def regime6s(self) -> bool:
        return self.N > 6 * self.s

    def max_eps(self) -> float:
        """Upper end of the admissible range ``0 < eps < 2*_s - 2``."""
        return self.two_star - 2.0


def crit_exponent(p: Params) -> float:
    return 2.0 * p.N / (p.N - 2.0 * p.s)


def gamma_ratio(p: Params) -> float:
    """Gamma((N+2s)/2) / Gamma((N-2s)/2), via log-gamma for stability."""
    return math.exp(special.gammaln((p.N + 2 * p.s) / 2) - special.gammaln((p.N - 2 * p.s) / 2))


def lambda_star(p: Params) -> float:
    """Width of the bubble that solves (-Delta)^s U = U^(2*_s - 1) with U(0) = 1.

    With the symbol |xi|^(2s), scaling the standard identity
    (-Delta)^s (1+|x|^2)^(-(N-2s)/2) = 2^(2s) G (1+|x|^2)^(-(N+2s)/2)
    forces lambda^(2s) = 2^(2s) G, i.e. lambda = 2 G^(1/(2s)).
    """
    return 2.0 * gamma_ratio(p) ** (1.0 / (2.0 * p.s))


def lambda_printed(p: Params) -> float:
    """The width as printed with exponent 1/2; agrees with lambda_star only at s = 1/2."""
    return 2.0 * math.sqrt(gamma_ratio(p))


def beta_integral(N: int, a: float) -> float:
    """int_{R^N} (1+|y|^2)^(-a) dy, finite for a > N/2."""
    if a <= N / 2:
        raise ValueError(f"integral diverges for a={a} <= N/2={N / 2}")
    return math.pi ** (N / 2) * math.exp(special.gammaln(a - N / 2) - special.gammaln(a))


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^(N-1); equals 2 for N = 1."""
    return 2.0 * math.pi ** (N / 2) / special.gamma(N / 2)


def sobolev_closed_form(p: Params) -> float:
    """Sharp constant of D^s -> L^(2*_s) for the symbol |xi|^(2s) (Lieb / Cotsiolis-Tavoularis)."""
    N, s = p.N, p.s
    return (
        2 ** (2 * s)
        * math.pi**s
        * gamma_ratio(p)
        * (special.gamma(N / 2) / special.gamma(N)) ** (2 * s / N)
    )


class QuadratureError(RuntimeError):
    """Radial quadrature failed to reach the requested accuracy."""

    def __init__(self, what: str, estimate: float, value: float):
        super().__init__(f"{what}: quadrature error estimate {estimate:.3e} for value {value:.6e}")
        self.estimate = estimate
        self.value = value


def _power_tail(N: int, a: float, R: float, rtol: float = 1e-16) -> float:
    """int_R^inf (1+r^2)^(-a) r^(N-1) dr by the binomial series in r^-2 (R > 1)."""
    # (1+r^2)^(-a) = r^(-2a) sum_k binom(-a, k) r^(-2k)
    total = 0.0
    coef = 1.0
    for k in range(200):
        expo = 2 * a + 2 * k - N
        term = coef * R ** (-expo) / expo
        total += term
        if abs(term) < rtol * abs(total):
            break
        coef *= (-a - k) / (k + 1)
    return total


def radial_power_integral(N: int, a: float, r_cut: float = 50.0) -> tuple[float, float]:
    """int_{R^N} (1+|y|^2)^(-a) dy by adaptive quadrature on [0, r_cut] plus the series tail.

    Returns ``(value, error_estimate)``.
    """
    f = lambda r: (1.0 + r * r) ** (-a) * r ** (N - 1)
    pieces = [0.0, 1.0, 5.0, r_cut]
    core, err = 0.0, 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=2e-14, limit=400)
        core += val
        err += e
    tail = _power_tail(N, a, r_cut)
    omega = sphere_area(N)
    value = omega * (core + tail)
    return value, omega * err


def _log_moment_quadrature(N: int) -> tuple[float, float]:
    """int_{R^N} (1+|y|^2)^(-N) ln(1+|y|^2) dy by radial quadrature."""
    f = lambda r: (1.0 + r * r) ** (-N) * math.log1p(r * r) * r ** (N - 1)
    total, err = 0.0, 0.0
    for lo, hi in ((0.0, 1.0), (1.0, 10.0), (10.0, np.inf)):
        val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
        err += e
    omega = sphere_area(N)
    return omega * total, omega * err


def log_moment_closed_form(N: int, a: float) -> float:
    """int (1+|y|^2)^(-a) ln(1+|y|^2) dy = B(a) (psi(a) - psi(a - N/2)), minus d/da of the Beta form."""
    return beta_integral(N, a) * (special.digamma(a) - special.digamma(a - N / 2))


@dataclass(frozen=True)
class ConstantsReport:
    N: int
    s: float
    two_star: float
    lambda_star: float
    sobolev_S: float
    bubble_l2_mass: float
    bubble_crit_mass: float
    bubble_log_moment: float
    blowup_L: float
    A_thm: float
    A_asy6: float
    discrepancy_ratio: float
    # extras appended after the documented columns
    lambda_printed: float = float("nan")
    blowup_L_literal: float = float("nan")
    l2_quadrature: float = float("nan")
    crit_quadrature: float = float("nan")

    CSV_COLUMNS = (
        "N", "s", "two_star", "lambda", "S", "U_l2", "U_crit", "U_logmom",
        "blowup_L", "A_thm", "A_asy6", "discrepancy_ratio",
        "lambda_printed", "blowup_L_literal",
    )

    def csv_row(self) -> str:
        vals = [
            self.N, self.s, self.two_star, self.lambda_star, self.sobolev_S,
            self.bubble_l2_mass, self.bubble_crit_mass, self.bubble_log_moment,
            self.blowup_L, self.A_thm, self.A_asy6, self.discrepancy_ratio,
            self.lambda_printed, self.blowup_L_literal,
        ]
        return ",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in vals)

    def key_values(self) -> str:
        return "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))


def bubble_moments(p: Params, check_rtol: float = 1e-8) -> ConstantsReport:
    """Moments of the bubble, each computed in closed form and cross-checked by quadrature.

    Only ``bubble_crit_mass``, ``bubble_l2_mass``, ``sobolev_S`` and the log moment are
    filled; the blow-up fields are left as NaN (see :func:`blowup_constants`).
    """
    if not p.regime4s:
        raise ValueError(f"int U^2 diverges unless N > 4s (N={p.N}, s={p.s})")
    N, s = p.N, p.s
    lam = lambda_star(p)
    # U^(2*) = (1+|x|^2/lam^2)^(-N),  U^2 = (1+|x|^2/lam^2)^(2s-N)
    crit = lam**N * beta_integral(N, N)
    l2 = lam**N * beta_integral(N, N - 2 * s)
    crit_q, crit_err = radial_power_integral(N, N)
    l2_q, l2_err = radial_power_integral(N, N - 2 * s)
    crit_q *= lam**N
    l2_q *= lam**N
    for name, exact, quad, est in (("U_crit", crit, crit_q, crit_err), ("U_l2", l2, l2_q, l2_err)):
        if abs(quad - exact) > check_rtol * abs(exact):
            raise QuadratureError(name, max(est, abs(quad - exact)), exact)
    # ln U = ((2s-N)/2) ln(1+|y|^2) in y = x/lam
    logq, log_err = _log_moment_quadrature(N)
    if log_err > 1e-10 * abs(logq):
        raise QuadratureError("U_logmom", log_err, logq)
    log_moment = (2 * s - N) / 2 * lam**N * logq
    nan = float("nan")
    return ConstantsReport(
        N=N, s=s, two_star=p.two_star, lambda_star=lam,
        sobolev_S=crit ** (2 * s / N),
        bubble_l2_mass=l2, bubble_crit_mass=crit, bubble_log_moment=log_moment,
        blowup_L=nan, A_thm=nan, A_asy6=nan, discrepancy_ratio=nan,
        lambda_printed=lambda_printed(p), l2_quadrature=l2_q, crit_quadrature=crit_q,
    )


def a_theorem(p: Params, S: float) -> float:
    """A_{N,s} exactly as printed in the main theorem."""
    N, s = p.N, p.s
    return (
        2 ** (2 * (N + 1)) * N**2 * math.pi ** (N / 2) * special.gamma((N - 4 * s) / 2)
        / ((N - 2 * s) ** 2 * special.gamma(N - 2 * s))
        * S ** (-N / (2 * s))
    )


def blowup_constants(p: Params) -> ConstantsReport:
    """Bubble moments plus the blow-up constant and the two printed closed forms.

    ``blowup_L`` is the limit of eps * ||u_eps||_inf^(4s/(N-2s)) for V = 1, obtained from
    the Pohozaev identity with its s/N factor kept:

        blowup_L = (s/N) (2N/(N-2s))^2 S^(-N/(2s)) int U^2.

    ``blowup_L_literal`` drops the s/N factor, as in the printed chain.
    """
    rep = bubble_moments(p)
    N, s = p.N, p.s
    literal = crit_exponent(p) ** 2 * rep.bubble_l2_mass / rep.bubble_crit_mass
    L = (s / N) * literal
    A_thm = a_theorem(p, rep.sobolev_S)
    A_asy6 = A_thm * gamma_ratio(p) ** N
    return ConstantsReport(
        **{
            **{f.name: getattr(rep, f.name) for f in fields(rep)},
            "blowup_L": L,
            "blowup_L_literal": literal,
            "A_thm": A_thm,
            "A_asy6": A_asy6,
            "discrepancy_ratio": A_thm / L,
        }
    )

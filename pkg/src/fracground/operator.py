"""Fourier-multiplier operators on the periodic grid.

The fractional Laplacian is the multiplier |xi|^(2s); with this normalisation

    [u]_s^2 = int |xi|^(2s) |u_hat|^2 dxi / (2 pi)^N = <(-Delta)^(s/2) u, (-Delta)^(s/2) u>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special
from scipy.sparse.linalg import LinearOperator, ArpackNoConvergence, eigsh, minres

from .constants import Params, QuadratureError, crit_exponent
from .field import Field, Grid


def _fwd(u: Field) -> np.ndarray:
    return np.fft.rfftn(u.values)


def _inv(coef: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.irfftn(coef, s=grid.shape, axes=tuple(range(grid.dim)))


def frac_lap_array(values: np.ndarray, grid: Grid, s: float) -> np.ndarray:
    """Array-level (-Delta)^s, used inside solver loops."""
    return _inv(np.fft.rfftn(values) * grid.symbol(s), grid)


def frac_lap(u: Field, s: float) -> Field:
    return Field(u.grid, frac_lap_array(u.values, u.grid, s))


def seminorm_s(u: Field, s: float) -> float:
    """[u]_s^2 by Plancherel on the grid (a squared quantity)."""
    g = u.grid
    c = _fwd(u)
    total = np.sum(g.rfft_weights * g.symbol(s) * np.abs(c) ** 2)
    return float(total * g.cell_volume / g.points**g.dim)


def bessel_resolvent_array(values: np.ndarray, grid: Grid, s: float, c: float) -> np.ndarray:
    return _inv(np.fft.rfftn(values) / (c + grid.symbol(s)), grid)


def bessel_resolvent(u: Field, s: float, c: float) -> Field:
    """((-Delta)^s + c)^(-1) u."""
    if c <= 0:
        raise ValueError(f"resolvent shift must be positive, got {c}")
    return Field(u.grid, bessel_resolvent_array(u.values, u.grid, s, c))


# ---------------------------------------------------------------------------
# Gagliardo double integral, direct evaluation (1-D validation only)


def c_1s(s: float) -> float:
    """Normalising constant of the 1-D singular-integral form."""
    return 4**s * special.gamma(0.5 + s) / (math.sqrt(math.pi) * abs(special.gamma(-s)))


def gagliardo_direct_1d(values: np.ndarray, h: float, half_width: float, s: float) -> float:
    """(c_{1,s}/2) int int |u(x)-u(y)|^2 / |x-y|^(1+2s) for u supported in the box.

    Pairs inside the box use the midpoint double sum without the diagonal; pairs with
    one point outside use the exact exterior integral of |x-y|^(-1-2s).  O(M^2) memory.
    """
    M = values.size
    x = -half_width + h * np.arange(M)
    d = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(d, np.inf)
    inner = np.sum((values[:, None] - values[None, :]) ** 2 / d ** (1 + 2 * s)) * h * h
    right = (half_width - x) ** (-2 * s) / (2 * s)
    left = (x + half_width + h) ** (-2 * s) / (2 * s)
    outer = 2.0 * np.sum(values**2 * (right + left)) * h
    return 0.5 * c_1s(s) * (inner + outer)


# ---------------------------------------------------------------------------
# Bessel kernel K = F^{-1}[(1 + |xi|^(2s))^(-1)]
#
# 1/(1 + z^s) is a Stieltjes function of z = |xi|^2:
#     1/(1 + z^s) = int_0^inf rho(t) / (z + t) dt,
#     rho(t) = sin(pi s) t^s / (pi (1 + 2 t^s cos(pi s) + t^(2s))),
# so K is a positive mixture of Green's functions of -Delta + t.


def _stieltjes_density(t: np.ndarray | float, s: float):
    ts = t**s
    return math.sin(math.pi * s) * ts / (math.pi * (1.0 + 2.0 * ts * math.cos(math.pi * s) + ts * ts))


def _yukawa(N: int, r: float, t: float) -> float:
    k = math.sqrt(t)
    if N == 1:
        return math.exp(-k * r) / (2.0 * k)
    if N == 2:
        return special.k0(k * r) / (2.0 * math.pi)
    return math.exp(-k * r) / (4.0 * math.pi * r)


def bessel_kernel_profile(r_samples: Sequence[float], p: Params, rtol: float = 1e-10) -> np.ndarray:
    """K(r) at each radius, with quadrature in log t of the Stieltjes mixture."""
    r_arr = np.asarray(r_samples, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("radii must be positive")
    if np.any(np.diff(r_arr) < 0):
        raise ValueError("radii must be sorted")
    N, s = p.N, p.s
    out = np.empty_like(r_arr)
    for i, r in enumerate(r_arr):
        f = lambda lt: _stieltjes_density(math.exp(lt), s) * _yukawa(N, r, math.exp(lt)) * math.exp(lt)
        # the integrand peaks near t ~ 1/r^2; it decays like t^(s+N/2-1) below and like
        # exp(-sqrt(t) r) above, so a finite window in log t suffices
        mid = -2.0 * math.log(r)
        knots = (mid - 80.0, mid - 10.0, mid, mid + 8.0, mid + 16.0)
        total, err = 0.0, 0.0
        for lo, hi in zip(knots[:-1], knots[1:]):
            val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=rtol, limit=200)
            total += val
            err += e
        if not total > 0 or err > 1e3 * rtol * total:
            raise QuadratureError(f"Bessel kernel at r={r:g}", err, total)
        out[i] = total
    return out


def loglog_slope(r: np.ndarray, f: np.ndarray) -> float:
    return float(np.polyfit(np.log(r), np.log(f), 1)[0])


def kernel_mass(p: Params, r_max: float = 1e6, n: int = 400) -> float:
    """int_{R^N} K by radial quadrature of the profile (should be 1)."""
    # K ~ C r^(-(N+2s)) beyond r_max; add that tail analytically from the last sample
    r = np.geomspace(1e-8, r_max, n)
    k = bessel_kernel_profile(r, p)
    omega = 2.0 * math.pi ** (p.N / 2) / special.gamma(p.N / 2)
    lr = np.log(r)
    core = integrate.simpson(k * r**p.N, x=lr)
    tail = k[-1] * r_max**p.N / (2 * p.s)
    head = k[0] * r[0] ** p.N / (2 * p.s)  # K ~ r^(2s-N) near 0
    return omega * (core + tail + head)


# ---------------------------------------------------------------------------
# linearised operator at the bubble


def linearized_apply(v: Field, p: Params, U: Field) -> Field:
    """(-Delta)^s v - (2*_s - 1) U^(2*_s - 2) v."""
    if v.grid != U.grid:
        raise ValueError("v and U live on different grids")
    q = crit_exponent(p)
    return Field(v.grid, frac_lap_array(v.values, v.grid, p.s) - (q - 1) * U.values ** (q - 2) * v.values)


def linearized_operator(p: Params, U: Field) -> Callable[[np.ndarray], np.ndarray]:
    """Flat-array version of :func:`linearized_apply` for iterative solvers."""
    g = U.grid
    q = crit_exponent(p)
    pot = ((q - 1) * U.values ** (q - 2)).ravel()

    def apply(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        return frac_lap_array(x.reshape(g.shape), g, p.s).ravel() - pot * x

    return apply


def frac_lap_operator(grid: Grid, s: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: frac_lap_array(np.asarray(x, dtype=float).reshape(grid.shape), grid, s).ravel()


class EigenError(RuntimeError):
    def __init__(self, msg: str, residuals: Sequence[float] = ()):
        super().__init__(msg)
        self.residuals = list(residuals)


@dataclass(frozen=True)
class Eigenpair:
    value: float
    vector: Field
    residual: float


def symmetry_defect(apply: Callable, n: int, rng: np.random.Generator, trials: int = 3) -> float:
    """max |<Ax, y> - <x, Ay>| / (|Ax||y|) over random vectors."""
    worst = 0.0
    for _ in range(trials):
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        ax, ay = apply(x), apply(y)
        worst = max(worst, abs(ax @ y - x @ ay) / (np.linalg.norm(ax) * np.linalg.norm(y)))
    return worst


def low_spectrum(
    apply: Callable[[np.ndarray], np.ndarray],
    k: int,
    grid: Grid,
    s: float,
    sigma: float = -1e-3,
    precond_shift: float = 1.0,
    inner_rtol: float = 1e-11,
    inner_maxiter: int = 2000,
    seed: int = 0,
) -> list[Eigenpair]:
    """The k eigenpairs nearest ``sigma`` (just below 0 by default) by shift-invert Lanczos.

    Inner solves use MINRES on (A - sigma) preconditioned with ((-Delta)^s + c)^(-1).
    Eigenvectors are returned with unit discrete L^2 norm, sorted by |value|.
    """
    if not 1 <= k <= 12:
        raise ValueError("k must lie in 1..12")
    n = grid.points**grid.dim
    rng = np.random.default_rng(seed)
    if symmetry_defect(apply, n, rng) > 1e-10:
        raise ValueError("operator is not self-adjoint to 1e-10")

    shifted = LinearOperator((n, n), matvec=lambda x: apply(x) - sigma * x, dtype=float)
    prec = LinearOperator(
        (n, n),
        matvec=lambda x: bessel_resolvent_array(np.asarray(x).reshape(grid.shape), grid, s, precond_shift).ravel(),
        dtype=float,
    )
    inner_fail = []

    def solve(b):
        x, info = minres(shifted, b, M=prec, rtol=inner_rtol, maxiter=inner_maxiter)
        if info != 0:
            inner_fail.append(info)
        return x

    OPinv = LinearOperator((n, n), matvec=solve, dtype=float)
    A = LinearOperator((n, n), matvec=apply, dtype=float)
    try:
        vals, vecs = eigsh(A, k=k, sigma=sigma, which="LM", OPinv=OPinv, tol=1e-10,
                           v0=rng.standard_normal(n), maxiter=500)
    except ArpackNoConvergence as exc:
        res = [float(np.linalg.norm(apply(v) - l * v)) for l, v in zip(exc.eigenvalues, exc.eigenvectors.T)]
        raise EigenError("shift-invert Lanczos did not converge", res) from exc
    order = np.argsort(np.abs(vals))
    out = []
    scale = math.sqrt(grid.cell_volume)
    for i in order:
        v = vecs[:, i]
        res = float(np.linalg.norm(apply(v) - vals[i] * v) / np.linalg.norm(v))
        out.append(Eigenpair(float(vals[i]), Field(grid, (v / (np.linalg.norm(v) * scale)).reshape(grid.shape)), res))
    if inner_fail:
        worst = max(p.residual for p in out)
        if worst > 1e-6:
            raise EigenError(f"inner MINRES failed {len(inner_fail)} times", [p.residual for p in out])
    return out


def subspace_similarity(a: Sequence[Field], b: Sequence[Field]) -> np.ndarray:
    """Cosines of the principal angles between span(a) and span(b), descending."""
    A = np.column_stack([f.values.ravel() for f in a])
    B = np.column_stack([f.values.ravel() for f in b])
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    return np.linalg.svd(qa.T @ qb, compute_uv=False)


__all__ = [
    "frac_lap", "frac_lap_array", "seminorm_s", "bessel_resolvent", "bessel_resolvent_array",
    "gagliardo_direct_1d", "c_1s", "bessel_kernel_profile", "loglog_slope", "kernel_mass",
    "linearized_apply", "linearized_operator", "frac_lap_operator", "low_spectrum", "Eigenpair",
    "EigenError", "subspace_similarity", "symmetry_defect",
]

"""Certificates computed from a solved ground state."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bubble import BubbleSpec, Rescaled, bubble_field, kernel_modes, radial_average, rescale_to_blowup
from .constants import Params, crit_exponent
from .field import Field, Grid, Potential, ball_mask, integrate_field, potential_gradient_moment, weighted_l2
from .operator import linearized_apply, linearized_operator, low_spectrum, subspace_similarity
from .solver import GroundState


class NotConverged(ValueError):
    pass


@dataclass(frozen=True)
class PohozaevSides:
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs) / max(abs(self.lhs), abs(self.rhs))


def pohozaev_sides(u: Field, V: Potential, eps: float, p: Params) -> PohozaevSides:
    """Both sides of the Pohozaev balance for (-Delta)^s u + V u = u^(q-1), q = 2*_s - eps:

        (1/q - 1/2*_s) int u^q = (s/N) int [V + (x . grad V)/(2s)] u^2.
    """
    q = crit_exponent(p) - eps
    lhs = (1.0 / q - 1.0 / crit_exponent(p)) * integrate_field(np.abs(u.values) ** q, u.grid)
    rhs = (p.s / p.N) * (weighted_l2(u, V) + potential_gradient_moment(u, V) / (2 * p.s))
    return PohozaevSides(lhs, rhs)


def pohozaev_residual(gs: GroundState, V: Potential, p: Params) -> float:
    if not gs.converged:
        raise NotConverged("Pohozaev residual needs a converged ground state")
    if not np.any(gs.u.values > 0):
        raise NotConverged("zero field is not a ground state")
    return pohozaev_sides(gs.u, V, gs.eps, p).residual


def comparison_ratio(gs: GroundState, p: Params, rescaled: Optional[Rescaled] = None) -> float:
    """sup_x v(x)/U(x) for the blow-up rescaling v of u."""
    r = rescaled or rescale_to_blowup(gs.u, gs.eps, p)
    U = bubble_field(BubbleSpec(p), r.v.grid)
    return float(np.max(r.v.values / U.values))


def comparison_ratio_field(v: Field, p: Params) -> float:
    U = bubble_field(BubbleSpec(p), v.grid)
    return float(np.max(v.values / U.values))


def decay_slope(u: Field, center: Sequence[float], shell: tuple[float, float]) -> float:
    """Least-squares slope of log(radial average) against log r on r_lo <= r <= r_hi."""
    r_lo, r_hi = shell
    if not 0 < r_lo < r_hi:
        raise ValueError("shell must satisfy 0 < r_lo < r_hi")
    if r_hi >= u.grid.half_width:
        raise ValueError("shell leaves the box")
    rb, mean = radial_average(u, center)
    sel = (rb >= r_lo) & (rb <= r_hi) & (mean > 0)
    if sel.sum() < 3:
        raise ValueError(f"shell [{r_lo}, {r_hi}] holds fewer than three radial bins")
    return float(np.polyfit(np.log(rb[sel]), np.log(mean[sel]), 1)[0])


def tail_mass(u: Field, p: Params) -> float:
    """Fraction of int |u|^(2*_s) carried by the shell max_i |x_i| > 0.8 L."""
    g = u.grid
    shell = np.zeros(g.shape, dtype=bool)
    for xi in g.coords:
        shell = shell | (np.abs(xi) > 0.8 * g.half_width)
    dens = np.abs(u.values) ** crit_exponent(p)
    tot = dens.sum()
    return float(dens[shell].sum() / tot) if tot > 0 else 0.0


def moser_ratio_field(u: Field, center: Sequence[float], r: float, R: float, p: Params) -> float:
    """max_{B_r} u / (int_{B_R} u^(2*_s))^(1/2*_s), balls about ``center``."""
    if not 0 < r < R:
        raise ValueError("need 0 < r < R")
    if R >= u.grid.half_width:
        raise ValueError(f"ball of radius {R} does not fit in the box")
    q = crit_exponent(p)
    inner = ball_mask(u.grid, center, r)
    outer = ball_mask(u.grid, center, R)
    top = float(np.abs(u.values[inner]).max())
    denom = integrate_field(np.where(outer, np.abs(u.values) ** q, 0.0), u.grid) ** (1.0 / q)
    return top / denom


def moser_ratio(gs: GroundState, r: float, R: float, p: Params, rescaled: Optional[Rescaled] = None) -> float:
    """Moser ratio of the blow-up rescaling v (balls fixed in rescaled coordinates)."""
    res = rescaled or rescale_to_blowup(gs.u, gs.eps, p)
    return moser_ratio_field(res.v, np.zeros(p.N), r, R, p)


@dataclass
class KernelReport:
    N: int
    s: float
    eigenvalues: list[float]
    mode_residuals: list[float]
    delta: float
    near_zero: int
    gap: float
    similarity: list[float]
    coercivity: float
    ritz_residuals: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.near_zero == self.N + 1
            and min(self.similarity) >= 0.99
            and self.gap >= 10 * max(self.mode_residuals)
        )

    def csv(self) -> str:
        head = "index,eigenvalue,ritz_residual"
        rows = [f"{i},{v:.17g},{r:.3e}" for i, (v, r) in enumerate(zip(self.eigenvalues, self.ritz_residuals))]
        tail = [
            f"# near_zero={self.near_zero} expected={self.N + 1} delta={self.delta:.6g} gap={self.gap:.6g}",
            "# similarity=" + ";".join(f"{c:.6f}" for c in self.similarity),
            "# mode_residuals=" + ";".join(f"{c:.6g}" for c in self.mode_residuals),
            f"# coercivity={self.coercivity:.6g} ok={self.ok}",
        ]
        return "\n".join([head, *rows, *tail]) + "\n"


def kernel_spectrum_check(p: Params, grid: Grid, seed: int = 0) -> KernelReport:
    """Low spectrum of the linearisation at the unit bubble against its analytic kernel.

    delta = 10 * max_i ||L psi_i|| over the analytic kernel modes; the gap is the smallest
    |eigenvalue| beyond the first N+1 (ordered by magnitude).
    """
    spec = BubbleSpec(p)
    U = bubble_field(spec, grid)
    modes = kernel_modes(spec, grid)
    mode_res = [math.sqrt(integrate_field(linearized_apply(m, p, U).values ** 2, grid)) for m in modes]
    delta = 10 * max(mode_res)
    pairs = low_spectrum(linearized_operator(p, U), p.N + 3, grid, p.s, seed=seed)
    vals = [e.value for e in pairs]
    near = sum(abs(v) < delta for v in vals)
    gap = abs(vals[p.N + 1])
    sim = subspace_similarity([e.vector for e in pairs[: p.N + 1]], modes)

    # random direction orthogonal to the analytic modes
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(np.column_stack([m.values.ravel() for m in modes]))
    x = bubble_field(spec, grid).values.ravel() * rng.standard_normal(Q.shape[0])
    x -= Q @ (Q.T @ x)
    Lx = linearized_operator(p, U)(x)
    coerc = float(abs(x @ Lx) / (x @ x))
    return KernelReport(
        p.N, p.s, vals, mode_res, delta, near, gap, [float(c) for c in sim], coerc,
        [e.residual for e in pairs],
    )


def concentration_integral(u: Field, p: Params, phi_center: Sequence[float], width: float) -> float:
    """int u^(2*_s) phi with the Gaussian test function phi = exp(-|x - c|^2 / width^2)."""
    phi = np.exp(-u.grid.radius_sq(phi_center) / width**2)
    return integrate_field(np.abs(u.values) ** crit_exponent(p) * phi, u.grid)


def sup_norm_floor(V: Potential, p: Params) -> float:
    """V0^(1/(2*_s - 2)), the lower bound on ||u||_inf for any ground state."""
    return V.v0 ** (1.0 / (crit_exponent(p) - 2))


__all__ = [
    "PohozaevSides", "pohozaev_sides", "pohozaev_residual", "comparison_ratio", "comparison_ratio_field",
    "decay_slope", "tail_mass", "moser_ratio", "moser_ratio_field", "KernelReport",
    "kernel_spectrum_check", "concentration_integral", "sup_norm_floor", "NotConverged",
]

"""Constrained minimisation of ||u||_{s,V}^2 on the unit sphere of L^(2*_s - eps)."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bubble import BubbleSpec, bubble_field, locate_max
from .constants import Params, crit_exponent
from .field import Field, Grid, Potential, integrate_field, lp_norm, weighted_l2, write_field
from .operator import bessel_resolvent_array, frac_lap_array, seminorm_s

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitSpec:
    """Starting guess: ``bubble`` (center, mu), ``random`` (seed) or ``field`` (given values)."""

    kind: str = "bubble"
    center: tuple[float, ...] = ()
    mu: float = 1.0
    seed: int = 0
    field: Optional[Field] = None

    def __post_init__(self):
        if self.kind not in ("bubble", "random", "field"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "field" and self.field is None:
            raise ValueError("init kind 'field' needs a field")

    @classmethod
    def bubble(cls, center: Sequence[float] = (), mu: float = 1.0) -> "InitSpec":
        return cls("bubble", center=tuple(center), mu=mu)

    @classmethod
    def random(cls, seed: int) -> "InitSpec":
        return cls("random", seed=seed)

    @classmethod
    def provided(cls, u: Field) -> "InitSpec":
        return cls("field", field=u)


@dataclass(frozen=True)
class SolverOptions:
    step: float = 1.0
    precond_shift: Optional[float] = None  # defaults to V0
    tol_residual: float = 1e-8
    tol_energy: float = 1e-12
    max_iters: int = 20000
    init: InitSpec = field(default_factory=InitSpec)
    dump_path: Optional[str] = None
    alias_warn: float = 1e-6

    def __post_init__(self):
        if self.step <= 0 or self.tol_residual <= 0 or self.tol_energy <= 0:
            raise ValueError("step and tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.precond_shift is not None and self.precond_shift <= 0:
            raise ValueError("precond_shift must be positive")


@dataclass(frozen=True, eq=False)
class GroundState:
    u: Field
    w: Field
    eps: float
    s_v: float
    x_max: np.ndarray
    mu: float
    iters: int
    residual: float
    converged: bool
    u_max: float = float("nan")
    energy_history: tuple[float, ...] = ()
    vanishing: bool = False
    alias_fraction: float = 0.0
    params: Optional[Params] = None

    @property
    def blowup_observable(self) -> float:
        p = self.params
        return self.eps * self.u_max ** (4 * p.s / (p.N - 2 * p.s))


class SolverDivergence(RuntimeError):
    def __init__(self, msg: str, last_good: np.ndarray, dump: Optional[Path] = None):
        super().__init__(msg + (f" (last good state written to {dump})" if dump else ""))
        self.last_good = last_good
        self.dump = dump


def rayleigh_quotient(u: Field, V: Potential, eps: float, p: Params) -> float:
    """(seminorm + int V u^2) / ||u||_(2*_s - eps)^2."""
    n = lp_norm(u, crit_exponent(p) - eps)
    if n == 0.0:
        raise ValueError("Rayleigh quotient of the zero field")
    return (seminorm_s(u, p.s) + weighted_l2(u, V)) / n**2


def _qnorm(values: np.ndarray, q: float, dv: float) -> float:
    scale = values.max()
    return float(scale * (np.sum((values / scale) ** q) * dv) ** (1.0 / q))


def _initial(p: Params, grid: Grid, init: InitSpec, V: Potential) -> np.ndarray:
    if init.kind == "field":
        if init.field.grid != grid:
            raise ValueError("provided initial field lives on another grid")
        return np.maximum(np.array(init.field.values), 0.0)
    if init.kind == "bubble":
        c = init.center or tuple(V.argmin(p.N) if V.argmin(p.N) is not None else np.zeros(p.N))
        return np.array(bubble_field(BubbleSpec(p, tuple(c), init.mu), grid).values)
    # smooth random positive field: low-pass noise, exponentiated, under a Gaussian envelope
    rng = np.random.default_rng(init.seed)
    L = grid.half_width
    noise = rng.standard_normal(grid.shape)
    k2 = np.zeros(grid.shape)
    for i, kk in enumerate(np.ix_(*([grid.wavenumbers] * grid.dim))):
        k2 = k2 + kk**2
    smooth = np.fft.ifftn(np.fft.fftn(noise) * np.exp(-k2 * (L / 8) ** 2)).real
    smooth /= smooth.std() or 1.0
    center = rng.uniform(-0.2 * L, 0.2 * L, size=grid.dim)
    r2 = grid.radius_sq(center)
    return np.exp(0.5 * smooth) * np.exp(-r2 / (0.1 * L) ** 2)


def _high_freq_fraction(values: np.ndarray, grid: Grid) -> float:
    """Share of spectral energy in the top third of wavenumbers (aliasing monitor)."""
    c = np.abs(np.fft.rfftn(values)) ** 2 * grid.rfft_weights
    kmax = math.pi / grid.h
    tot = c.sum()
    return float(c[grid.rfft_abs_xi > (2.0 / 3.0) * kmax].sum() / tot) if tot > 0 else 0.0


def solve_ground_state(p: Params, V: Potential, grid: Grid, eps: float, opts: SolverOptions = SolverOptions()) -> GroundState:
    """Preconditioned projected gradient flow on the constraint ||w||_q = 1, q = 2*_s - eps."""
    if not 0.0 < eps < p.max_eps():
        raise ValueError(f"eps must lie in (0, {p.max_eps():.6g}), got {eps}")
    if grid.dim != p.N:
        raise ValueError("grid dimension differs from N")
    q = crit_exponent(p) - eps
    s = p.s
    dv = grid.cell_volume
    Vx = np.ascontiguousarray(V.sample(grid))
    c = opts.precond_shift or V.v0

    w = _initial(p, grid, opts.init, V)
    if not np.any(w > 0):
        raise ValueError("initial guess has no positive part")
    w = w / _qnorm(w, q, dv)

    def energy_grad(w):
        Aw = frac_lap_array(w, grid, s) + Vx * w
        E = float(np.dot(Aw.ravel(), w.ravel()) * dv)
        g = Aw - E * w ** (q - 1)
        return E, g

    E, g = energy_grad(w)
    res = math.sqrt(float(np.sum(g * g) * dv))
    tau = opts.step
    hist = [E]
    converged = False
    it = 0
    last_dE = math.inf
    streak = 0
    while it < opts.max_iters:
        if res < opts.tol_residual and last_dE < opts.tol_energy * abs(E):
            converged = True
            break
        it += 1
        d = bessel_resolvent_array(g, grid, s, c)
        while True:
            trial = np.maximum(w - tau * d, 0.0)
            if not np.all(np.isfinite(trial)) or not np.any(trial > 0):
                raise _diverged(w, grid, s, opts, "non-finite or vanishing iterate")
            nrm = _qnorm(trial, q, dv)
            trial /= nrm
            E_t, g_t = energy_grad(trial)
            if not math.isfinite(E_t):
                raise _diverged(w, grid, s, opts, "energy overflow")
            if E_t <= E * (1 + 1e-15) or tau < 1e-12:
                break
            tau *= 0.5
            streak = 0
        last_dE = abs(E - E_t)
        w, E, g = trial, E_t, g_t
        res = math.sqrt(float(np.sum(g * g) * dv))
        hist.append(E)
        streak += 1
        if streak >= 8 and tau < opts.step:
            tau = min(opts.step, 1.5 * tau)
            streak = 0
        if abs(_qnorm(w, q, dv) - 1.0) > 1e-6:  # renormalisation drift
            log.warning("constraint drift at iteration %d; renormalising", it)
            w /= _qnorm(w, q, dv)

    alias = _high_freq_fraction(np.maximum(w, 0) ** (q - 1), grid)
    if alias > opts.alias_warn:
        log.warning("high-frequency fraction %.2e of the nonlinearity exceeds %.0e", alias, opts.alias_warn)

    wf = Field(grid, w)
    u = Field(grid, E ** (1.0 / (q - 2)) * w)
    x_max, u_max = locate_max(u)
    mu = u_max ** (-(q - 2) / (2 * s))
    # mass drifting to the box edge signals that the minimiser is escaping to infinity
    shell = np.zeros(grid.shape, dtype=bool)
    for xi in grid.coords:
        shell = shell | (np.abs(xi) > 0.8 * grid.half_width)
    # a near-uniform state (the periodic stand-in for spreading out) is flagged the same way
    edge = integrate_field(np.where(shell, w**q, 0.0), grid)
    vanishing = bool(np.any(np.abs(x_max) > 0.8 * grid.half_width)) or edge > min(0.5, 0.9 * shell.mean())
    return GroundState(
        u=u, w=wf, eps=eps, s_v=E, x_max=x_max, mu=mu, iters=it, residual=res,
        converged=converged and not vanishing, u_max=u_max, energy_history=tuple(hist),
        vanishing=vanishing, alias_fraction=alias, params=p,
    )


def _diverged(w, grid, s, opts: SolverOptions, why: str) -> SolverDivergence:
    dump = None
    if opts.dump_path:
        dump = write_field(opts.dump_path, Field(grid, w), s, {"reason": why})
    return SolverDivergence(why, w, dump)


def radial_asymmetry(u: Field, center: Sequence[float]) -> float:
    """max |u(c + x) - u(c - x)| / max u after band-limited recentring (0 for even profiles)."""
    from .bubble import resample_scaled

    v = resample_scaled(u.values, u.grid, center, 1.0)
    flipped = v[tuple(slice(None, None, -1) for _ in range(u.grid.dim))]
    flipped = np.roll(flipped, 1, axis=tuple(range(u.grid.dim)))  # x -> -x on the grid
    return float(np.abs(v - flipped).max() / v.max())


def default_starts(p: Params, V: Potential, grid: Grid, n_starts: int, seed: int, mu: float = 1.0) -> list[InitSpec]:
    """Bubble at argmin V, bubbles off centre, then random positive fields."""
    if n_starts < 2:
        raise ValueError("multi_start needs at least two starts")
    rng = np.random.default_rng(seed)
    c0 = V.argmin(p.N)
    c0 = np.zeros(p.N) if c0 is None else c0
    starts = [InitSpec.bubble(tuple(c0), mu)]
    L = grid.half_width
    while len(starts) < n_starts:
        if len(starts) % 2 == 1:
            off = c0 + rng.uniform(-0.15 * L, 0.15 * L, size=p.N)
            starts.append(InitSpec.bubble(tuple(off), mu * rng.uniform(0.5, 2.0)))
        else:
            starts.append(InitSpec.random(int(rng.integers(2**31))))
    return starts


def multi_start(
    p: Params, V: Potential, grid: Grid, eps: float, n_starts: int, seed: int = 0,
    opts: SolverOptions = SolverOptions(), starts: Optional[Sequence[InitSpec]] = None,
    workers: Optional[int] = None,
) -> list[GroundState | Exception]:
    """Independent solves from distinct starts, sorted by s_v (failures last)."""
    if n_starts < 2:
        raise ValueError("multi_start needs at least two starts")
    starts = list(starts) if starts is not None else default_starts(p, V, grid, n_starts, seed)
    if len(starts) != n_starts:
        raise ValueError("number of starts differs from n_starts")

    def run(init):
        try:
            return solve_ground_state(p, V, grid, eps, replace(opts, init=init))
        except Exception as exc:  # reported per start, batch continues
            return exc

    workers = workers or min(n_starts, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        out = list(pool.map(run, starts))
    return sorted(out, key=lambda r: (isinstance(r, Exception), getattr(r, "s_v", math.inf)))


__all__ = [
    "InitSpec", "SolverOptions", "GroundState", "SolverDivergence", "solve_ground_state",
    "rayleigh_quotient", "multi_start", "default_starts", "radial_asymmetry",
]

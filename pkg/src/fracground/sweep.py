"""eps-sweeps, asymptotic fits and the persistence format."""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .bubble import rescale_to_blowup, resample_scaled
from .constants import ConstantsReport, Params
from .diagnostics import (
    comparison_ratio_field,
    moser_ratio_field,
    pohozaev_sides,
    tail_mass,
)
from .field import Field, Grid, Potential, read_field, write_field
from .solver import GroundState, InitSpec, SolverOptions, multi_start, radial_asymmetry, solve_ground_state

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepConfig:
    params: Params
    grid: Grid
    potential: Potential
    eps_schedule: tuple[float, ...]
    solver: SolverOptions = SolverOptions()
    out_dir: Optional[str] = None
    seed: int = 0
    moser_radii: tuple[float, float] = (1.0, 2.0)
    resolution_factor: float = 4.0  # a record is resolved when mu >= factor * h
    min_points: int = 4

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", eps)
        if len(eps) < self.min_points:
            raise ValueError(f"eps schedule needs at least {self.min_points} points, got {len(eps)}")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps schedule must be strictly decreasing")
        top = self.params.max_eps()
        if eps[0] >= top or eps[-1] <= 0:
            raise ValueError(f"eps values must lie in (0, {top:.6g})")
        if self.grid.dim != self.params.N:
            raise ValueError("grid dimension differs from N")

    def canonical(self) -> str:
        """Stable text form used for the manifest hash."""
        V = self.potential
        parts = [
            f"dim={self.params.N}", f"s={self.params.s!r}", f"box={self.grid.half_width!r}",
            f"points={self.grid.points}", f"potential.kind={V.kind}", f"potential.a={V.a!r}",
            f"potential.b={V.b!r}", f"potential.w={V.w!r}", f"potential.center={V.center}",
            "eps=" + ",".join(repr(e) for e in self.eps_schedule), f"seed={self.seed}",
            f"solver.step={self.solver.step!r}", f"solver.precond_shift={self.solver.precond_shift!r}",
            f"solver.tol_residual={self.solver.tol_residual!r}", f"solver.tol_energy={self.solver.tol_energy!r}",
            f"solver.max_iters={self.solver.max_iters}", f"solver.init={self.solver.init.kind}:"
            f"{self.solver.init.center}:{self.solver.init.mu!r}:{self.solver.init.seed}",
            f"moser={self.moser_radii}", f"resolution_factor={self.resolution_factor!r}",
        ]
        return "\n".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SweepRecord:
    eps: float
    s_v: float
    u_max: float
    mu: float
    mu_pow_eps: float
    x_max: tuple[float, ...]
    pohozaev_rel: float
    tail_mass: float
    comp_ratio: float
    moser_ratio: float
    blowup_observable: float
    iters: int
    converged: bool
    resolved: bool

    @property
    def accepted(self) -> bool:
        return self.converged and self.resolved


def observable(eps: float, u_max: float, p: Params) -> float:
    return eps * u_max ** (4 * p.s / (p.N - 2 * p.s))


# ---------------------------------------------------------------------------
# CSV


def csv_header(N: int) -> list[str]:
    xs = [f"x_max_{i + 1}" for i in range(N)]
    return ["eps", "s_v", "u_max", "mu", "mu_pow_eps", *xs, "pohozaev_rel", "tail_mass",
            "comp_ratio", "moser_ratio", "blowup_observable", "iters", "converged", "resolved"]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def record_row(r: SweepRecord) -> list[str]:
    return [_fmt(r.eps), _fmt(r.s_v), _fmt(r.u_max), _fmt(r.mu), _fmt(r.mu_pow_eps),
            *[_fmt(x) for x in r.x_max], _fmt(r.pohozaev_rel), _fmt(r.tail_mass), _fmt(r.comp_ratio),
            _fmt(r.moser_ratio), _fmt(r.blowup_observable), _fmt(r.iters), _fmt(r.converged), _fmt(r.resolved)]


def write_records(records: Sequence[SweepRecord], N: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(N))
    for r in records:
        w.writerow(record_row(r))
    return buf.getvalue()


def parse_records(text: str) -> list[SweepRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return []
    head = rows[0]
    N = sum(h.startswith("x_max_") for h in head)
    if head != csv_header(N):
        raise ValueError("unexpected sweep CSV header")
    out = []
    for row in rows[1:]:
        d = dict(zip(head, row))
        out.append(SweepRecord(
            eps=float(d["eps"]), s_v=float(d["s_v"]), u_max=float(d["u_max"]), mu=float(d["mu"]),
            mu_pow_eps=float(d["mu_pow_eps"]), x_max=tuple(float(d[f"x_max_{i + 1}"]) for i in range(N)),
            pohozaev_rel=float(d["pohozaev_rel"]), tail_mass=float(d["tail_mass"]),
            comp_ratio=float(d["comp_ratio"]), moser_ratio=float(d["moser_ratio"]),
            blowup_observable=float(d["blowup_observable"]), iters=int(d["iters"]),
            converged=d["converged"] == "1", resolved=d["resolved"] == "1",
        ))
    return out


# ---------------------------------------------------------------------------
# running


def make_record(gs: GroundState, cfg: SweepConfig) -> SweepRecord:
    p, V = cfg.params, cfg.potential
    nan = float("nan")
    resolved = gs.mu >= cfg.resolution_factor * cfg.grid.h
    poh = pohozaev_sides(gs.u, V, gs.eps, p).residual
    comp = moser = nan
    try:
        r = rescale_to_blowup(gs.u, gs.eps, p, check_resolution=False)
        comp = comparison_ratio_field(r.v, p)
        rr, RR = cfg.moser_radii
        if RR < cfg.grid.half_width:
            moser = moser_ratio_field(r.v, np.zeros(p.N), rr, RR, p)
    except ValueError as exc:
        log.warning("rescaling failed at eps=%g: %s", gs.eps, exc)
    return SweepRecord(
        eps=gs.eps, s_v=gs.s_v, u_max=gs.u_max, mu=gs.mu, mu_pow_eps=gs.mu**gs.eps,
        x_max=tuple(float(x) for x in gs.x_max), pohozaev_rel=poh, tail_mass=tail_mass(gs.u, p),
        comp_ratio=comp, moser_ratio=moser, blowup_observable=observable(gs.eps, gs.u_max, p),
        iters=gs.iters, converged=gs.converged, resolved=bool(resolved),
    )


def warm_start(prev_w: Field, prev_eps: float, prev_x: Sequence[float], eps: float, p: Params) -> InitSpec:
    """Zoom the previous minimiser about its peak by the predicted change of scale.

    mu scales like eps^(1/(2s)) to leading order, so the new guess is w(x0 + k (x - x0))
    with k = (prev_eps/eps)^(1/(2s)). Points that map outside the box are set to zero
    rather than wrapped.
    """
    g = prev_w.grid
    k = (prev_eps / eps) ** (1.0 / (2 * p.s))
    vals = resample_scaled(prev_w.values, g, prev_x, k, origin=prev_x)
    inside = np.ones(g.shape, dtype=bool)
    for xi, c in zip(g.coords, prev_x):
        inside = inside & (np.abs(c + k * (xi - c)) < g.half_width)
    return InitSpec.provided(Field(g, np.where(inside, np.maximum(vals, 0.0), 0.0)))


def _manifest(cfg: SweepConfig, started: str) -> str:
    lines = [
        f"config_hash={cfg.digest()}", f"package_version={__version__}", f"numpy={np.__version__}",
        f"scipy={scipy.__version__}", f"python={platform.python_version()}", f"seed={cfg.seed}",
        f"started={started}",
    ]
    return "\n".join(lines) + "\n" + "\n".join("config." + ln for ln in cfg.canonical().splitlines()) + "\n"


def _field_path(out: Path, i: int) -> Path:
    return out / f"w_{i:03d}.bin"


def run_sweep(cfg: SweepConfig, resume: bool = True) -> list[SweepRecord]:
    """Solve along the schedule with warm starts; persist as it goes when out_dir is set."""
    p = cfg.params
    out = Path(cfg.out_dir) if cfg.out_dir else None
    records: list[SweepRecord] = []
    prev: Optional[tuple[Field, float, tuple[float, ...]]] = None
    csv_path = out / "sweep.csv" if out else None
    started = time.strftime("%Y-%m-%dT%H:%M:%S")

    if out:
        out.mkdir(parents=True, exist_ok=True)
        man = out / "manifest.txt"
        if resume and csv_path.exists() and man.exists() and f"config_hash={cfg.digest()}" in man.read_text():
            records = parse_records(csv_path.read_text())
            if records:
                last = len(records) - 1
                w, _ = read_field(_field_path(out, last))
                prev = (w, records[-1].eps, records[-1].x_max)
                log.info("resuming after %d records", len(records))
                if not records[-1].resolved:
                    return records
        else:
            man.write_text(_manifest(cfg, started))
            csv_path.write_text(",".join(csv_header(p.N)) + "\n")

    for i in range(len(records), len(cfg.eps_schedule)):
        eps = cfg.eps_schedule[i]
        opts = cfg.solver
        if prev is not None:
            opts = replace(opts, init=warm_start(prev[0], prev[1], prev[2], eps, p))
        try:
            gs = solve_ground_state(p, cfg.potential, cfg.grid, eps, opts)
        except Exception as exc:  # the sweep carries on past a failed eps
            log.error("solve failed at eps=%g: %s", eps, exc)
            if not records and prev is None:
                return []
            continue
        rec = make_record(gs, cfg)
        records.append(rec)
        if out:
            with open(csv_path, "a", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(record_row(rec))
            write_field(_field_path(out, len(records) - 1), gs.w, p.s, {"eps": repr(eps)})
        if gs.converged:
            prev = (gs.w, eps, tuple(gs.x_max))
        if not rec.resolved:
            log.warning("mu=%.3g fell below %.1f h at eps=%g; stopping", gs.mu, cfg.resolution_factor, eps)
            break
    if out:
        with open(out / "manifest.txt", "a") as fh:
            fh.write(f"finished={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
    return records


# ---------------------------------------------------------------------------
# fits


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class LimitFit:
    limit: float
    ci: float
    slope: float
    n: int


def _design(records: Sequence[SweepRecord], s: float) -> tuple[np.ndarray, list[SweepRecord]]:
    good = [r for r in records if r.accepted]
    if len(good) < 3:
        raise FitError(f"need at least 3 resolved records, have {len(good)}")
    x = np.array([r.mu ** (2 * s) for r in good])
    if np.ptp(x) <= 1e-12 * np.abs(x).max():
        raise FitError("all records share the same mu; the fit is degenerate")
    return x, good


def fit_blowup_limit(records: Sequence[SweepRecord], s: float, n_boot: int = 2000, seed: int = 0) -> LimitFit:
    """Fit blowup_observable = a + b mu^(2s); a is the limit, ci a 95% residual-bootstrap half-width."""
    x, good = _design(records, s)
    y = np.array([r.blowup_observable for r in good])
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        yb = A @ coef + rng.choice(resid, size=resid.size, replace=True)
        boots[b] = np.linalg.lstsq(A, yb, rcond=None)[0][0]
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return LimitFit(float(coef[0]), float((hi - lo) / 2), float(coef[1]), len(good))


def fit_sobolev_limit(records: Sequence[SweepRecord], s: float, n_boot: int = 2000, seed: int = 0) -> LimitFit:
    """Same model as fit_blowup_limit applied to s_v."""
    x, good = _design(records, s)
    y = np.array([r.s_v for r in good])
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rng = np.random.default_rng(seed)
    boots = np.array([
        np.linalg.lstsq(A, A @ coef + rng.choice(resid, size=resid.size), rcond=None)[0][0] for _ in range(n_boot)
    ])
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return LimitFit(float(coef[0]), float((hi - lo) / 2), float(coef[1]), len(good))


def predicted_energy_slope(consts: ConstantsReport, V0_at_x0: float) -> float:
    """First-order coefficient c1 in s_v = S + c1 mu^(2s), with C~ = blowup_L V(x0)."""
    N, s = consts.N, consts.s
    S = consts.sobolev_S
    ts = consts.two_star
    Ct = consts.blowup_L * V0_at_x0
    return (
        S ** (-(N - 2 * s) / (2 * s))
        * ((2 / ts) * Ct * consts.bubble_log_moment + V0_at_x0 * consts.bubble_l2_mass)
        - Ct * (2 / ts**2) * S * math.log(S ** (N / (2 * s)))
    )


def fit_energy_slope(records: Sequence[SweepRecord], consts: ConstantsReport, V0_at_x0: float) -> tuple[float, float]:
    """Least-squares slope of (s_v - S) against mu^(2s) through the origin, and the prediction."""
    p = Params(consts.N, consts.s)
    if not p.regime6s:
        raise ValueError(f"energy expansion needs N > 6s (N={p.N}, s={p.s})")
    x, good = _design(records, p.s)
    y = np.array([r.s_v for r in good]) - consts.sobolev_S
    slope = float(x @ y / (x @ x))
    return slope, predicted_energy_slope(consts, V0_at_x0)


# ---------------------------------------------------------------------------
# concentration and uniqueness


@dataclass
class ConcentrationReport:
    applicable: bool
    distances: list[float] = field(default_factory=list)
    v_gaps: list[float] = field(default_factory=list)
    h: float = float("nan")

    @property
    def final_distance(self) -> float:
        return self.distances[-1] if self.distances else float("nan")

    @property
    def ok(self) -> bool:
        return (not self.applicable) or (bool(self.distances) and self.final_distance < 2 * self.h)


def concentration_check(records: Sequence[SweepRecord], V: Potential, grid: Grid) -> ConcentrationReport:
    x0 = V.argmin(grid.dim)
    if x0 is None:
        return ConcentrationReport(False, h=grid.h)
    good = [r for r in records if r.accepted]
    d = [float(np.linalg.norm(np.asarray(r.x_max) - x0)) for r in good]
    vmin = V.v0
    gaps = [V(r.x_max) - vmin for r in good]
    return ConcentrationReport(True, d, gaps, grid.h)


@dataclass
class UniquenessReport:
    n_starts: int
    n_converged: int
    max_distance: float
    s_values: list[float]
    asymmetry: float
    failures: list[str]


def uniqueness_test(cfg: SweepConfig, n_starts: int, eps: Optional[float] = None,
                    starts: Optional[Sequence[InitSpec]] = None) -> UniquenessReport:
    """Multi-start solves at one eps compared after recentring and blow-up rescaling."""
    p = cfg.params
    eps = cfg.eps_schedule[-1] if eps is None else eps
    res = multi_start(p, cfg.potential, cfg.grid, eps, n_starts, cfg.seed, cfg.solver, starts=starts)
    ok = [r for r in res if isinstance(r, GroundState) and r.converged]
    fails = [repr(r) if isinstance(r, Exception) else f"not converged (s_v={r.s_v:.6g})"
             for r in res if not (isinstance(r, GroundState) and r.converged)]
    vs = [rescale_to_blowup(g.u, eps, p, check_resolution=False).v.values for g in ok]
    dist = 0.0
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            dist = max(dist, float(np.abs(vs[i] - vs[j]).max()))
    if len(vs) < 2:
        dist = float("nan")
    asym = max((radial_asymmetry(g.u, g.x_max) for g in ok), default=float("nan"))
    return UniquenessReport(n_starts, len(ok), dist, [g.s_v for g in ok], asym, fails)


__all__ = [
    "SweepConfig", "SweepRecord", "run_sweep", "make_record", "warm_start", "observable",
    "csv_header", "write_records", "parse_records", "fit_blowup_limit", "fit_sobolev_limit",
    "fit_energy_slope", "predicted_energy_slope", "LimitFit", "FitError", "concentration_check",
    "ConcentrationReport", "uniqueness_test", "UniquenessReport",
]

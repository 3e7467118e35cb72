"""Flat ``key = value`` run files.

Recognised keys (``#`` starts a comment):

    dim, s, box, points, seed, out_dir
    potential.kind            constant | gaussian_well
    potential.a, potential.b, potential.w, potential.center (comma separated)
    eps                       comma separated, strictly decreasing (``solve`` uses the first)
    solver.step, solver.precond_shift, solver.tol_residual, solver.tol_energy, solver.max_iters
    solver.init               bubble | random
    solver.init.mu, solver.init.center, solver.init.seed
    moser.r, moser.R, resolution_factor, n_starts, max_points
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .constants import Params
from .field import DEFAULT_MAX_POINTS, Grid, Potential
from .solver import InitSpec, SolverOptions
from .sweep import SweepConfig

_SECTION = "run"
KNOWN = {
    "dim", "s", "box", "points", "seed", "out_dir", "potential.kind", "potential.a", "potential.b",
    "potential.w", "potential.center", "eps", "solver.step", "solver.precond_shift",
    "solver.tol_residual", "solver.tol_energy", "solver.max_iters", "solver.init", "solver.init.mu",
    "solver.init.center", "solver.init.seed", "moser.r", "moser.R", "resolution_factor", "n_starts",
    "max_points",
}


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


@dataclass(frozen=True)
class RunConfig:
    params: Params
    grid: Grid
    potential: Potential
    eps: tuple[float, ...]
    solver: SolverOptions
    seed: int = 0
    out_dir: Optional[str] = None
    moser_radii: tuple[float, float] = (1.0, 2.0)
    resolution_factor: float = 4.0
    n_starts: int = 5

    def sweep(self, out_dir: Optional[str] = None) -> SweepConfig:
        return SweepConfig(
            self.params, self.grid, self.potential, self.eps, self.solver,
            out_dir or self.out_dir, self.seed, self.moser_radii, self.resolution_factor,
        )


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # keys are case sensitive (moser.R)
    try:
        cp.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    kv = dict(cp[_SECTION])
    unknown = set(kv) - KNOWN
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    try:
        return _build(kv)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


def _build(kv: dict[str, str]) -> RunConfig:
    p = Params(int(kv["dim"]), float(kv["s"]))
    grid = Grid(p.N, float(kv["box"]), int(kv["points"]),
                max_points=int(kv.get("max_points", DEFAULT_MAX_POINTS)))
    kind = kv.get("potential.kind", "constant")
    center = _floats(kv.get("potential.center", ""))
    if kind == "constant":
        V = Potential.uniform(float(kv.get("potential.a", 1.0)))
    elif kind == "gaussian_well":
        V = Potential.gaussian_well(float(kv["potential.a"]), float(kv["potential.b"]),
                                    float(kv.get("potential.w", 1.0)), center)
    else:
        raise ValueError(f"potential.kind {kind!r} is not available from a config file")
    init_kind = kv.get("solver.init", "bubble")
    if init_kind == "bubble":
        init = InitSpec.bubble(_floats(kv.get("solver.init.center", "")), float(kv.get("solver.init.mu", 1.0)))
    elif init_kind == "random":
        init = InitSpec.random(int(kv.get("solver.init.seed", 0)))
    else:
        raise ValueError(f"solver.init must be bubble or random, got {init_kind!r}")
    shift = kv.get("solver.precond_shift")
    opts = SolverOptions(
        step=float(kv.get("solver.step", 1.0)),
        precond_shift=float(shift) if shift else None,
        tol_residual=float(kv.get("solver.tol_residual", 1e-8)),
        tol_energy=float(kv.get("solver.tol_energy", 1e-12)),
        max_iters=int(kv.get("solver.max_iters", 20000)),
        init=init,
    )
    eps = _floats(kv["eps"])
    if not eps:
        raise ValueError("eps list is empty")
    return RunConfig(
        params=p, grid=grid, potential=V, eps=eps, solver=opts, seed=int(kv.get("seed", 0)),
        out_dir=kv.get("out_dir"),
        moser_radii=(float(kv.get("moser.r", 1.0)), float(kv.get("moser.R", 2.0))),
        resolution_factor=float(kv.get("resolution_factor", 4.0)),
        n_starts=int(kv.get("n_starts", 5)),
    )


__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config", "KNOWN"]

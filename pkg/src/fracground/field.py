"""Periodic grids, sampled fields, quadrature norms and analytic potentials."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_MAX_POINTS = 2**24


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the box [-L, L)^dim with M points per axis."""

    dim: int
    half_width: float
    points: int
    max_points: int = field(default=DEFAULT_MAX_POINTS, compare=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        M = self.points
        if M < 16 or M & (M - 1):
            raise ValueError(f"points per axis must be a power of two >= 16, got {M}")
        if M**self.dim > self.max_points:
            raise ValueError(f"{M}^{self.dim} points exceeds the cap of {self.max_points}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.points)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays (open mesh)."""
        return tuple(np.ix_(*([self.axis] * self.dim)))

    def radius_sq(self, center: Sequence[float] | None = None) -> np.ndarray:
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        out = np.zeros(self.shape)
        for xi, ci in zip(self.coords, c):
            out = out + (xi - ci) ** 2
        return out

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers pi k / L, k = -M/2 .. M/2 - 1, in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.h)

    @cached_property
    def rfft_abs_xi(self) -> np.ndarray:
        """|xi| on the half-spectrum layout used by rfftn (last axis halved)."""
        k = self.wavenumbers
        k_last = np.abs(k[: self.points // 2 + 1])
        axes = [k] * (self.dim - 1) + [k_last]
        k2 = np.zeros([a.size for a in axes])
        for i, a in enumerate(axes):
            shape = [1] * self.dim
            shape[i] = a.size
            k2 = k2 + a.reshape(shape) ** 2
        return np.sqrt(k2)

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each rfft coefficient in the full spectrum (1 or 2)."""
        n = self.points // 2 + 1
        w = np.full(n, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * (self.dim - 1) + [n]
        return np.broadcast_to(w.reshape(shape), self.rfft_abs_xi.shape)

    def symbol(self, s: float) -> np.ndarray:
        return _symbol_cache(self, float(s))

    def index_of(self, point: Sequence[float]) -> tuple[int, ...]:
        """Nearest grid index (periodic wrap) to a physical point."""
        return tuple(int(round((p + self.half_width) / self.h)) % self.points for p in point)


_SYMBOLS: dict[tuple[Grid, float], np.ndarray] = {}


def _symbol_cache(grid: Grid, s: float) -> np.ndarray:
    key = (grid, s)
    sym = _SYMBOLS.get(key)
    if sym is None:
        if len(_SYMBOLS) > 16:
            _SYMBOLS.clear()
        sym = grid.rfft_abs_xi ** (2.0 * s)
        _SYMBOLS[key] = sym
    return sym


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples on a grid; the array is stored read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def scaled(self, t: float) -> "Field":
        return Field(self.grid, t * self.values)

    def max(self) -> float:
        return float(self.values.max())

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))


def lp_norm(u: Field, p: float) -> float:
    """Discrete L^p norm (midpoint rule); ``p = np.inf`` gives the max norm."""
    if p == np.inf:
        return float(np.abs(u.values).max())
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    a = np.abs(u.values)
    scale = a.max()
    if scale == 0.0:
        return 0.0
    return float(scale * (np.sum((a / scale) ** p) * u.grid.cell_volume) ** (1.0 / p))


def integrate_field(values: np.ndarray, grid: Grid) -> float:
    return float(np.sum(values) * grid.cell_volume)


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialCheck:
    v0_sampled: float
    vmax_sampled: float
    boundary_gap: float
    xgrad_bound: float
    ok: bool
    messages: tuple[str, ...] = ()


@dataclass(frozen=True)
class Potential:
    """Analytic potential V with its radial derivative.

    kinds:
      ``constant``       V = a
      ``gaussian_well``  V = a - b exp(-|x - c|^2 / w), a > b >= 0
      ``custom_radial``  V = f(|x - c|) with optional derivative df
    """

    kind: str
    a: float = 1.0
    b: float = 0.0
    w: float = 1.0
    center: tuple[float, ...] = ()
    radial: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    radial_deriv: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    bounds: tuple[float, float] = (float("nan"), float("nan"))

    def __post_init__(self):
        if self.kind == "constant":
            if self.a <= 0:
                raise ValueError("constant potential must be positive")
        elif self.kind == "gaussian_well":
            if not self.a > self.b >= 0:
                raise ValueError(f"gaussian_well needs a > b >= 0 (V0 = a - b > 0), got a={self.a}, b={self.b}")
            if self.w <= 0:
                raise ValueError("gaussian_well width must be positive")
        elif self.kind == "custom_radial":
            if self.radial is None:
                raise ValueError("custom_radial needs a radial profile")
            v0, vinf = self.bounds
            if not (0 < v0 <= vinf):
                raise ValueError("custom_radial needs bounds (v0, v_inf) with 0 < v0 <= v_inf")
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    # constructors -------------------------------------------------------
    @classmethod
    def uniform(cls, c: float = 1.0) -> "Potential":
        return cls("constant", a=c)

    @classmethod
    def gaussian_well(cls, a: float, b: float, w: float, center: Sequence[float] = ()) -> "Potential":
        return cls("gaussian_well", a=a, b=b, w=w, center=tuple(float(c) for c in center))

    @classmethod
    def custom_radial(cls, f, df=None, v0: float = float("nan"), v_inf: float = float("nan"),
                      center: Sequence[float] = ()) -> "Potential":
        return cls("custom_radial", radial=f, radial_deriv=df, bounds=(v0, v_inf),
                   center=tuple(float(c) for c in center))

    # properties ---------------------------------------------------------
    @property
    def v0(self) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "gaussian_well":
            return self.a - self.b
        return self.bounds[0]

    @property
    def v_inf(self) -> float:
        if self.kind in ("constant", "gaussian_well"):
            return self.a
        return self.bounds[1]

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "gaussian_well" and self.b == 0)

    def argmin(self, dim: int) -> Optional[np.ndarray]:
        """Unique minimiser when there is one (well centre), else None."""
        if self.kind == "gaussian_well" and self.b > 0:
            return self._center(dim)
        return None

    def _center(self, dim: int) -> np.ndarray:
        c = np.zeros(dim)
        if self.center:
            c[: len(self.center)] = self.center[:dim]
        return c

    # evaluation ---------------------------------------------------------
    def _r2(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        c = self._center(len(xs))
        r2 = 0.0
        for xi, ci in zip(xs, c):
            r2 = r2 + (xi - ci) ** 2
        return np.asarray(r2, dtype=float)

    def evaluate(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        """V at broadcastable coordinate arrays ``xs = (x1, ..., xN)``."""
        shape = np.broadcast_shapes(*[np.shape(x) for x in xs])
        if self.kind == "constant":
            return np.full(shape, self.a)
        r2 = np.broadcast_to(self._r2(xs), shape)
        if self.kind == "gaussian_well":
            return self.a - self.b * np.exp(-r2 / self.w)
        return np.asarray(self.radial(np.sqrt(r2)), dtype=float)

    def __call__(self, point: Sequence[float]) -> float:
        return float(self.evaluate([np.asarray(p, dtype=float) for p in point]))

    def x_dot_grad(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        """x . grad V(x) (with x measured from the origin, not the centre)."""
        shape = np.broadcast_shapes(*[np.shape(x) for x in xs])
        if self.kind == "constant":
            return np.zeros(shape)
        c = self._center(len(xs))
        x_dot_xc = 0.0
        for xi, ci in zip(xs, c):
            x_dot_xc = x_dot_xc + xi * (xi - ci)
        r2 = self._r2(xs)
        if self.kind == "gaussian_well":
            # grad V = (2b/w)(x - c) exp(-|x-c|^2/w)
            return np.broadcast_to((2 * self.b / self.w) * x_dot_xc * np.exp(-r2 / self.w), shape).copy()
        if self.radial_deriv is None:
            raise ValueError("custom_radial potential has no derivative; x.grad V unavailable")
        r = np.sqrt(r2)
        with np.errstate(divide="ignore", invalid="ignore"):
            dv_over_r = np.where(r > 0, self.radial_deriv(r) / np.where(r > 0, r, 1.0), 0.0)
        return np.broadcast_to(dv_over_r * x_dot_xc, shape).copy()

    def sample(self, grid: Grid) -> np.ndarray:
        return np.broadcast_to(self.evaluate(grid.coords), grid.shape)

    def validate(self, grid: Grid, tol: float = 1e-3) -> PotentialCheck:
        """Sampled check of 0 < V0 <= V <= V_inf and of a finite bound on |x . grad V|."""
        vals = self.sample(grid)
        msgs = []
        vmin, vmax = float(vals.min()), float(vals.max())
        ok = True
        if not vmin > 0:
            ok = False
            msgs.append(f"V not positive on grid (min {vmin:.3g})")
        if vmin < self.v0 - 1e-12 or vmax > self.v_inf + 1e-12:
            ok = False
            msgs.append(f"samples [{vmin:.6g}, {vmax:.6g}] leave [v0, v_inf] = [{self.v0:.6g}, {self.v_inf:.6g}]")
        shell = np.zeros(grid.shape, dtype=bool)
        for xi in grid.coords:
            shell = shell | (np.abs(xi) >= 0.95 * grid.half_width)
        gap = float(np.abs(vals[shell] - self.v_inf).max())
        if gap > tol * self.v_inf:
            ok = False
            msgs.append(f"boundary shell differs from v_inf by {gap:.3g}")
        try:
            xg = float(np.abs(self.x_dot_grad(grid.coords)).max())
        except ValueError as exc:
            xg = float("nan")
            msgs.append(str(exc))
        if not np.isfinite(xg):
            ok = False
        return PotentialCheck(vmin, vmax, gap, xg, ok, tuple(msgs))


def weighted_l2(u: Field, V: Potential) -> float:
    """int V u^2."""
    return integrate_field(V.sample(u.grid) * u.values**2, u.grid)


def potential_gradient_moment(u: Field, V: Potential) -> float:
    """int (x . grad V) u^2, using the analytic gradient."""
    return integrate_field(V.x_dot_grad(u.grid.coords) * u.values**2, u.grid)


# ---------------------------------------------------------------------------
# serialisation
#
# Binary layout (little-endian), 32-byte header then data:
#   bytes  0..3   magic b"FRGF"
#   bytes  4..7   int32  dim
#   bytes  8..15  int64  points per axis M
#   bytes 16..23  float64 half-width L
#   bytes 24..31  float64 order s
#   bytes 32..    M**dim float64 values, C (row-major) order, axis 0 slowest
# A plain-text ``<name>.meta`` sidecar carries the same fields plus free key=value extras.

MAGIC = b"FRGF"
HEADER = np.dtype([("magic", "S4"), ("dim", "<i4"), ("points", "<i8"), ("half_width", "<f8"), ("s", "<f8")])
assert HEADER.itemsize == 32


def write_field(path: str | Path, u: Field, s: float, meta: dict | None = None) -> Path:
    path = Path(path)
    g = u.grid
    hdr = np.zeros((), dtype=HEADER)
    hdr["magic"] = MAGIC
    hdr["dim"] = g.dim
    hdr["points"] = g.points
    hdr["half_width"] = g.half_width
    hdr["s"] = s
    with open(path, "wb") as fh:
        fh.write(hdr.tobytes())
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    lines = {"dim": g.dim, "points": g.points, "half_width": repr(g.half_width), "s": repr(float(s)),
             "dtype": "float64-le", "order": "C"}
    lines.update(meta or {})
    Path(str(path) + ".meta").write_text("".join(f"{k}={v}\n" for k, v in lines.items()))
    return path


def read_field(path: str | Path) -> tuple[Field, float]:
    """Returns ``(field, s)``."""
    raw = Path(path).read_bytes()
    hdr = np.frombuffer(raw[:32], dtype=HEADER)[0]
    if bytes(hdr["magic"]) != MAGIC:
        raise ValueError(f"{path}: not a field file")
    dim, M = int(hdr["dim"]), int(hdr["points"])
    grid = Grid(dim, float(hdr["half_width"]), M, max_points=max(DEFAULT_MAX_POINTS, M**dim))
    n = M**dim
    data = np.frombuffer(raw[32:], dtype="<f8")
    if data.size != n:
        raise ValueError(f"{path}: expected {n} values, found {data.size}")
    return Field(grid, data.reshape(grid.shape)), float(hdr["s"])


def read_meta(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(str(path) + ".meta").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def holder_exponent(p: float, q: float, r: float) -> float:
    """theta with 1/q = theta/p + (1-theta)/r, so ||u||_q <= ||u||_p^theta ||u||_r^(1-theta)."""
    if not (min(p, r) <= q <= max(p, r)):
        raise ValueError("q must lie between p and r")
    return (1.0 / q - 1.0 / r) / (1.0 / p - 1.0 / r)


def ball_mask(grid: Grid, center: Sequence[float], radius: float) -> np.ndarray:
    """Points within ``radius`` of ``center`` using periodic (minimum-image) distance."""
    r2 = np.zeros(grid.shape)
    period = 2 * grid.half_width
    for xi, ci in zip(grid.coords, center):
        d = (xi - ci + grid.half_width) % period - grid.half_width
        r2 = r2 + d**2
    return r2 <= radius**2


def min_image_radius(grid: Grid, center: Sequence[float]) -> np.ndarray:
    r2 = np.zeros(grid.shape)
    period = 2 * grid.half_width
    for xi, ci in zip(grid.coords, center):
        d = (xi - ci + grid.half_width) % period - grid.half_width
        r2 = r2 + d**2
    return np.sqrt(r2)


__all__ = [
    "Grid", "Field", "Potential", "PotentialCheck", "lp_norm", "weighted_l2",
    "potential_gradient_moment", "write_field", "read_field", "read_meta",
    "holder_exponent", "integrate_field", "ball_mask", "min_image_radius",
]

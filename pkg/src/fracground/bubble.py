"""The explicit bubble, its kernel modes, blow-up rescaling and the Kelvin transform."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import CZT

from .constants import Params, crit_exponent, lambda_star
from .field import Field, Grid, min_image_radius


@dataclass(frozen=True)
class BubbleSpec:
    params: Params
    center: tuple[float, ...] = ()
    mu: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        c = tuple(float(x) for x in self.center) or (0.0,) * self.params.N
        if len(c) != self.params.N:
            raise ValueError(f"center has {len(c)} components, expected {self.params.N}")
        object.__setattr__(self, "center", c)

    def check_margin(self, grid: Grid) -> bool:
        ok = all(abs(c) <= 0.75 * grid.half_width for c in self.center)
        if not ok:
            warnings.warn(f"bubble centre {self.center} is within L/4 of the box edge", stacklevel=2)
        return ok


def bubble_profile(r: np.ndarray, p: Params) -> np.ndarray:
    lam = lambda_star(p)
    return (1.0 + (np.asarray(r) / lam) ** 2) ** ((2 * p.s - p.N) / 2)


def _scaled_r2(spec: BubbleSpec, grid: Grid) -> tuple[np.ndarray, list[np.ndarray]]:
    if grid.dim != spec.params.N:
        raise ValueError(f"grid dimension {grid.dim} differs from N={spec.params.N}")
    ys = [(x - c) / spec.mu for x, c in zip(grid.coords, spec.center)]
    r2 = np.zeros(grid.shape)
    for y in ys:
        r2 = r2 + y**2
    return r2, ys


def bubble_field(spec: BubbleSpec, grid: Grid) -> Field:
    """Samples U((x - center)/mu); equals 1 at the centre."""
    spec.check_margin(grid)
    r2, _ = _scaled_r2(spec, grid)
    lam = lambda_star(spec.params)
    return Field(grid, (1.0 + r2 / lam**2) ** ((2 * spec.params.s - spec.params.N) / 2))


def kernel_modes(spec: BubbleSpec, grid: Grid, normalize: bool = True) -> list[Field]:
    """dU/dy_i for each axis, then the dilation mode (N-2s)/2 U + y . grad U."""
    p = spec.params
    N, s = p.N, p.s
    lam = lambda_star(p)
    r2, ys = _scaled_r2(spec, grid)
    base = 1.0 + r2 / lam**2
    U = base ** ((2 * s - N) / 2)
    dU_common = (2 * s - N) / lam**2 * base ** ((2 * s - N) / 2 - 1)  # grad U = dU_common * y
    modes = [dU_common * y for y in ys]
    modes.append((N - 2 * s) / 2 * U + dU_common * r2)
    out = []
    for m in modes:
        if normalize:
            m = m / math.sqrt(np.sum(m**2) * grid.cell_volume)
        out.append(Field(grid, m))
    return out


# ---------------------------------------------------------------------------
# band-limited evaluation


def _spectral_coeffs(values: np.ndarray) -> np.ndarray:
    """Centred DFT coefficients c_k (k = -M/2..M/2-1 per axis) with the Nyquist term split."""
    c = np.fft.fftshift(np.fft.fftn(values)) / values.size
    return c


def _axis_eval_matrix(grid: Grid, pts: np.ndarray) -> np.ndarray:
    """E[j, k] = exp(i xi_k (pts_j + L)) with Nyquist averaged, so u(pts) = E c along an axis."""
    M = grid.points
    k = np.arange(-M // 2, M // 2)
    xi = math.pi * k / grid.half_width
    E = np.exp(1j * np.outer(pts + grid.half_width, xi))
    # symmetric treatment of the Nyquist mode keeps real data real off-grid
    E[:, 0] = np.cos(xi[0] * (pts + grid.half_width))
    return E


def eval_bandlimited(values: np.ndarray, grid: Grid, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant at arbitrary points (shape (n, dim)), direct summation."""
    c = _spectral_coeffs(values)
    points = np.atleast_2d(points)
    out = np.empty(points.shape[0])
    for j, pt in enumerate(points):
        acc = c
        for ax in range(grid.dim):
            e = _axis_eval_matrix(grid, np.array([pt[ax]]))[0]
            acc = np.tensordot(e, acc, axes=([0], [0]))
        out[j] = acc.real
    return out


def _czt_axis(arr: np.ndarray, grid: Grid, start: float, step: float, axis: int) -> np.ndarray:
    """Evaluate the trigonometric series along ``axis`` at start + step*j, j = 0..M-1.

    ``arr`` holds centred coefficients along this axis; the sum over k of c_k exp(i xi_k y)
    at equispaced y is a chirp-z transform.
    """
    M = grid.points
    d = math.pi / grid.half_width
    k0 = -M // 2
    arr = np.moveaxis(arr, axis, -1)
    # sum_k c_k exp(i d k y_j) = exp(i d k0 y_j) sum_m c_{m+k0} exp(i d m y_j)
    y0 = start + grid.half_width
    m = np.arange(M)
    coef = arr * np.exp(1j * d * m * y0)
    w = np.exp(1j * d * step)  # scipy CZT sums x_n w^(n k)
    vals = CZT(M, M, w=w, a=1.0)(coef, axis=-1)
    y = y0 + step * np.arange(M)
    vals = vals * np.exp(1j * d * k0 * y)
    # Nyquist correction: replace exp(i xi_0 y) by cos(xi_0 y)
    nyq = arr[..., :1]
    vals = vals - nyq * np.exp(1j * d * k0 * y) + nyq * np.cos(d * k0 * y)
    return np.moveaxis(vals, -1, axis)


def resample_scaled(values: np.ndarray, grid: Grid, center: Sequence[float], scale: float,
                    origin: Sequence[float] | None = None) -> np.ndarray:
    """Band-limited samples of u(center + scale * (x - origin)) at the grid points x."""
    c = _spectral_coeffs(values).astype(complex)
    o = np.zeros(grid.dim) if origin is None else np.asarray(origin, dtype=float)
    for ax in range(grid.dim):
        start = center[ax] + scale * (-grid.half_width - o[ax])
        c = _czt_axis(c, grid, start, scale * grid.h, ax)
    return c.real


def _gradient_hessian(values: np.ndarray, grid: Grid, pt: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of the trigonometric interpolant at one point."""
    c = _spectral_coeffs(values)
    M = grid.points
    xi = math.pi * np.arange(-M // 2, M // 2) / grid.half_width
    rows = []
    for ax in range(grid.dim):
        e = _axis_eval_matrix(grid, np.array([pt[ax]]))[0]
        rows.append((e, 1j * xi * e, -(xi**2) * e))
        rows[-1][1][0] = -xi[0] * math.sin(xi[0] * (pt[ax] + grid.half_width))
        rows[-1][2][0] = -xi[0] ** 2 * math.cos(xi[0] * (pt[ax] + grid.half_width))

    def contract(orders):
        acc = c
        for ax, o in enumerate(orders):
            acc = np.tensordot(rows[ax][o], acc, axes=([0], [0]))
        return float(np.real(acc))

    n = grid.dim
    val = contract([0] * n)
    g = np.zeros(n)
    H = np.zeros((n, n))
    for i in range(n):
        o = [0] * n
        o[i] = 1
        g[i] = contract(o)
        o[i] = 2
        H[i, i] = contract(o)
        for j in range(i + 1, n):
            o = [0] * n
            o[i] = o[j] = 1
            H[i, j] = H[j, i] = contract(o)
    return val, g, H


def locate_max(u: Field, newton_steps: int = 6) -> tuple[np.ndarray, float]:
    """Argmax and peak value of the band-limited interpolant of u.

    Start from the grid argmax, refine with a 3-point quadratic fit per axis, then polish
    with Newton steps on the interpolant.
    """
    g = u.grid
    vals = u.values
    idx = np.unravel_index(int(np.argmax(vals)), g.shape)
    x = np.array([g.axis[i] for i in idx], dtype=float)
    for ax in range(g.dim):
        im = list(idx)
        ip = list(idx)
        im[ax] = (idx[ax] - 1) % g.points
        ip[ax] = (idx[ax] + 1) % g.points
        fm, f0, fp = vals[tuple(im)], vals[idx], vals[tuple(ip)]
        denom = fm - 2 * f0 + fp
        if denom < 0:
            x[ax] += 0.5 * g.h * (fm - fp) / denom
    peak = float(vals[idx])
    for _ in range(newton_steps):
        val, grad, H = _gradient_hessian(vals, g, x)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.linalg.eigvalsh(H) < 0) or np.max(np.abs(step)) > g.h:
            break
        x = x - step
        if np.max(np.abs(step)) < 1e-13 * max(1.0, g.half_width):
            break
    val = float(eval_bandlimited(vals, g, x[None, :])[0])
    if val < peak:  # Newton wandered; fall back to the grid point
        return np.array([g.axis[i] for i in idx]), peak
    return x, val


class UnderResolved(RuntimeError):
    def __init__(self, mu: float, h: float):
        super().__init__(f"concentration scale mu={mu:.4g} is below 4h={4 * h:.4g}")
        self.mu = mu
        self.h = h


@dataclass(frozen=True)
class Rescaled:
    v: Field
    mu: float
    x_max: np.ndarray
    u_max: float


def rescale_to_blowup(u: Field, eps: float, p: Params, check_resolution: bool = True) -> Rescaled:
    """v(x) = mu^(2s/(2*_s-2-eps)) u(x_max + mu x) with mu set by ||u||_inf.

    ``u_max`` is the peak of the band-limited interpolant, so v(0) = 1 up to rounding.
    """
    if np.any(u.values < 0) or not np.any(u.values > 0):
        raise ValueError("rescaling needs a nonnegative, nonzero field")
    q = crit_exponent(p) - eps
    x_max, u_max = locate_max(u)
    mu = u_max ** (-(q - 2) / (2 * p.s))
    if check_resolution and mu < 4 * u.grid.h:
        raise UnderResolved(mu, u.grid.h)
    v = resample_scaled(u.values, u.grid, x_max, mu) / u_max
    return Rescaled(Field(u.grid, v), float(mu), x_max, float(u_max))


# ---------------------------------------------------------------------------
# Kelvin transform


@dataclass(frozen=True)
class KelvinProfile:
    r: np.ndarray
    phi: np.ndarray
    excluded: tuple[float, float]  # resolvable window of r; samples outside were dropped


def radial_average(u: Field, center: Sequence[float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Shell-binned radial average with bin width h (bin centres, means)."""
    g = u.grid
    c = np.zeros(g.dim) if center is None else np.asarray(center, dtype=float)
    r = min_image_radius(g, c).ravel()
    b = np.floor(r / g.h + 0.5).astype(int)
    sums = np.bincount(b, weights=u.values.ravel())
    counts = np.bincount(b)
    keep = counts > 0
    return (np.arange(sums.size) * g.h)[keep], sums[keep] / counts[keep]


def kelvin(u: Field, p: Params, r: np.ndarray | None = None, n: int = 64) -> KelvinProfile:
    """Phi(r) = r^(2s-N) u(1/r) about the origin on log-spaced radii.

    In 1-D the interpolant is evaluated exactly at +-1/r and averaged; in higher
    dimensions the shell-binned radial average is linearly interpolated.
    """
    g = u.grid
    lo, hi = 1.0 / (0.8 * g.half_width), 1.0 / g.h
    if r is None:
        r = np.geomspace(lo, hi, n)
    r = np.asarray(r, dtype=float)
    keep = (r >= lo * (1 - 1e-12)) & (r <= hi * (1 + 1e-12))
    r = r[keep]
    rho = 1.0 / r
    if g.dim == 1:
        vals = 0.5 * (eval_bandlimited(u.values, g, rho[:, None]) + eval_bandlimited(u.values, g, -rho[:, None]))
    else:
        rb, mean = radial_average(u)
        vals = np.interp(rho, rb, mean)
    return KelvinProfile(r, r ** (2 * p.s - p.N) * vals, (lo, hi))


def kelvin_profile_inverse(prof: KelvinProfile, p: Params, rho: np.ndarray) -> np.ndarray:
    """Apply the inversion again to a sampled profile: rho^(2s-N) Phi(1/rho)."""
    lr = np.log(prof.r)
    vals = np.interp(np.log(1.0 / rho), lr, prof.phi)
    return rho ** (2 * p.s - p.N) * vals


__all__ = [
    "BubbleSpec", "bubble_field", "bubble_profile", "kernel_modes", "rescale_to_blowup", "Rescaled",
    "UnderResolved", "kelvin", "KelvinProfile", "kelvin_profile_inverse", "radial_average",
    "locate_max", "eval_bandlimited", "resample_scaled",
]

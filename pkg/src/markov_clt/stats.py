"""Distance estimators, Gaussian reference sampling and rate fitting.

One-dimensional Wasserstein-1 is computed exactly through the monotone
(quantile) coupling. In higher dimension the sliced estimator, an average
of 1-d distances over random unit directions, stands in for the full
optimal-transport distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import linalg
from .errors import DimensionError, DomainError
from .rng import as_generator


def as_samples(xs) -> np.ndarray:
    """Coerce to an ``(n, d)`` float array; a 1-d input is n scalar points."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if xs.ndim != 2:
        raise DimensionError(f"samples must be (n, d), got shape {xs.shape}")
    if xs.shape[0] < 1:
        raise DomainError("empty sample set")
    if not np.all(np.isfinite(xs)):
        raise ValueError("samples contain non-finite values")
    return xs


def _scalar_samples(xs):
    xs = as_samples(xs)
    if xs.shape[1] != 1:
        raise DimensionError(f"expected one-dimensional samples, got d={xs.shape[1]}")
    return np.sort(xs[:, 0])


def w1_exact_1d(xs, ys) -> float:
    """Exact W1 between two empirical laws on the line.

    Equal sizes use the mean absolute gap between order statistics. Unequal
    sizes integrate ``|F_x^{-1}(t) - F_y^{-1}(t)|`` over the merged grid of
    quantile levels ``i/m`` and ``j/k``.
    """
    x = _scalar_samples(xs)
    y = _scalar_samples(ys)
    m, k = len(x), len(y)
    if m == k:
        return float(np.mean(np.abs(x - y)))
    levels = np.union1d(np.arange(m + 1) / m, np.arange(k + 1) / k)
    widths = np.diff(levels)
    mid = 0.5 * (levels[:-1] + levels[1:])
    ix = np.minimum((mid * m).astype(np.int64), m - 1)
    iy = np.minimum((mid * k).astype(np.int64), k - 1)
    return float(np.sum(widths * np.abs(x[ix] - y[iy])))


def _gauss_antiderivative(x, sigma):
    # int_{-inf}^x Phi(t / sigma) dt
    z = x / sigma
    return x * ndtr(z) + sigma * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)


def w1_discrete_to_gaussian(atoms, probs, sigma: float) -> float:
    """Exact W1 between a discrete law on the line and ``N(0, sigma^2)``.

    Integrates ``|F(x) - Phi(x / sigma)|`` in closed form on each interval
    between consecutive atoms, splitting where the Gaussian CDF crosses the
    (constant) step height.
    """
    atoms = np.asarray(atoms, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(atoms)
    atoms, probs = atoms[order], probs[order]
    if sigma <= 0:
        return float(np.sum(probs * np.abs(atoms)))
    G = lambda x: _gauss_antiderivative(x, sigma)  # noqa: E731
    F = np.cumsum(probs)
    F = np.minimum(F / F[-1], 1.0)
    total = G(atoms[0])  # left tail, F = 0
    a = atoms[-1]
    total += sigma * np.exp(-0.5 * (a / sigma) ** 2) / np.sqrt(2 * np.pi) - a * ndtr(-a / sigma)
    for lo, hi, c in zip(atoms[:-1], atoms[1:], F[:-1]):
        cross = sigma * ndtri(c) if 0 < c < 1 else (np.inf if c >= 1 else -np.inf)
        if cross <= lo:  # Phi >= c on the whole interval
            total += (G(hi) - G(lo)) - c * (hi - lo)
        elif cross >= hi:
            total += c * (hi - lo) - (G(hi) - G(lo))
        else:
            total += c * (cross - lo) - (G(cross) - G(lo))
            total += (G(hi) - G(cross)) - c * (hi - cross)
    return float(total)


def random_directions(d: int, count: int, seed=0) -> np.ndarray:
    """Uniform unit vectors on the sphere in R^d, shape ``(count, d)``."""
    gen = as_generator(seed)
    u = gen.standard_normal((count, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def sliced_w1(xs, ys, directions: int = 256, seed=0) -> tuple[float, float]:
    """Sliced Wasserstein-1 with its Monte Carlo standard error over directions.

    Returns
    -------
    value, stderr : float
        Mean and standard error of ``w1_exact_1d(<u, xs>, <u, ys>)`` over
        `directions` uniformly random unit vectors ``u``.
    """
    xs, ys = as_samples(xs), as_samples(ys)
    if xs.shape[1] != ys.shape[1]:
        raise DimensionError(f"dimension mismatch: {xs.shape[1]} vs {ys.shape[1]}")
    if directions < 1:
        raise DomainError("need at least one direction")
    U = random_directions(xs.shape[1], directions, seed)
    px, py = xs @ U.T, ys @ U.T
    vals = np.array([w1_exact_1d(px[:, i], py[:, i]) for i in range(directions)])
    se = float(vals.std(ddof=1) / np.sqrt(directions)) if directions > 1 else 0.0
    return float(vals.mean()), se


def distance(xs, ys, directions: int = 256, seed=0) -> tuple[float, float]:
    """Exact W1 when d = 1 (stderr 0), sliced W1 otherwise."""
    xs, ys = as_samples(xs), as_samples(ys)
    if xs.shape[1] == 1 and ys.shape[1] == 1:
        return w1_exact_1d(xs, ys), 0.0
    return sliced_w1(xs, ys, directions, seed)


def gaussian_samples(cov, n: int, seed=0) -> np.ndarray:
    """``n`` draws of ``cov^{1/2} Z`` with ``Z ~ N(0, I)``, shape ``(n, d)``."""
    root = linalg.sqrt_psd(np.atleast_2d(cov))
    gen = as_generator(seed)
    Z = gen.standard_normal((n, root.shape[0]))
    return Z @ root


def empirical_covariance(xs) -> np.ndarray:
    """Unbiased (``1/(n-1)``) sample covariance."""
    xs = as_samples(xs)
    n = xs.shape[0]
    if n < 2:
        raise DomainError("empirical covariance needs at least two points")
    c = xs - xs.mean(axis=0)
    return linalg.symmetrize(c.T @ c / (n - 1))


def fit_rate(grid, values) -> tuple[float, float]:
    """Least-squares line through ``(log n, log value)``; returns ``(slope, intercept)``."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.shape != values.shape or grid.size < 2:
        raise DimensionError("fit_rate needs at least two matching grid points and values")
    if np.any(values <= 0) or np.any(grid <= 0):
        bad = np.nonzero(values <= 0)[0]
        where = f" at n={grid[bad[0]]:g}" if bad.size else ""
        raise DomainError(f"log-log fit needs positive values{where}")
    slope, intercept = np.polyfit(np.log(grid), np.log(values), 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class RateReport:
    grid: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    slope: float
    intercept: float

    @classmethod
    def fit(cls, grid, values, stderrs=None) -> "RateReport":
        grid = np.asarray(grid, dtype=float)
        if np.any(np.diff(grid) <= 0):
            raise DomainError("rate grid must be strictly increasing")
        values = np.asarray(values, dtype=float)
        stderrs = np.full_like(values, np.nan) if stderrs is None else np.asarray(stderrs, dtype=float)
        slope, intercept = fit_rate(grid, values)
        return cls(grid, values, stderrs, slope, intercept)

"""TD(0) as a Markov-modulated linear recursion, with Polyak-Ruppert averaging.

The iterate follows ``theta_{k+1} = theta_k - eps_k (A(X_k) theta_k + b(X_k))``
with ``eps_k = (k+1)^{-delta}``. The averaged iterate
``theta_bar_n = (1/n) sum_{k=1}^n theta_k`` is asymptotically normal around
``theta* = -A_bar^{-1} b_bar`` with covariance ``A_bar^{-1} Sigma_inf A_bar^{-T}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, markov, rng
from .ensemble import run_chunks
from .errors import DimensionError, DomainError, StabilityError
from .stats import RateReport

def _check_delta(delta):
    if not 0.5 < delta < 1.0:
        raise DomainError(f"step exponent delta must lie in (0.5, 1), got {delta}")


def step_size(k: int, delta: float) -> float:
    """``1 / (k+1)^delta``."""
    _check_delta(delta)
    return 1.0 / (k + 1.0) ** delta


def step_sizes(n: int, delta: float) -> np.ndarray:
    _check_delta(delta)
    return 1.0 / (np.arange(n, dtype=float) + 1.0) ** delta


@dataclass(frozen=True)
class TDModel:
    """Per-state ``(A(x), b(x))`` on a finite chain, plus the step exponent."""

    chain: markov.FiniteMarkovChain
    A_map: np.ndarray
    b_map: np.ndarray
    delta: float = 0.75

    def __post_init__(self):
        S = self.chain.n_states
        A = np.asarray(self.A_map, dtype=float)
        b = np.asarray(self.b_map, dtype=float)
        if A.ndim == 1:
            A = A[:, None, None]
        if b.ndim == 1:
            b = b[:, None]
        if A.ndim != 3 or A.shape[0] != S or A.shape[1] != A.shape[2]:
            raise DimensionError(f"A must be ({S}, d, d), got {A.shape}")
        if b.shape != (S, A.shape[1]):
            raise DimensionError(f"b must be ({S}, {A.shape[1]}), got {b.shape}")
        _check_delta(self.delta)
        object.__setattr__(self, "A_map", A)
        object.__setattr__(self, "b_map", b)
        if not linalg.is_hurwitz(-self.A_bar):
            raise StabilityError("-A_bar is not Hurwitz")

    @property
    def d(self) -> int:
        return self.A_map.shape[1]

    @property
    def A_bar(self) -> np.ndarray:
        return np.einsum("i,iab->ab", markov.stationary(self.chain), self.A_map)

    @property
    def b_bar(self) -> np.ndarray:
        return markov.stationary(self.chain) @ self.b_map


@dataclass(frozen=True)
class TDTarget:
    A_bar: np.ndarray
    b_bar: np.ndarray
    theta_star: np.ndarray
    sigma_inf: np.ndarray
    limit_cov: np.ndarray
    sigma_inf_pd: bool


def mean_dynamics(model: TDModel) -> TDTarget:
    """Fixed point, asymptotic noise covariance and limiting covariance of the averaged iterate.

    The noise covariance is the chain's asymptotic covariance for the reward
    ``r(x) = A(x) theta* + b(x)``; a singular result is flagged, not raised.
    """
    A_bar, b_bar = model.A_bar, model.b_bar
    if not linalg.is_hurwitz(-A_bar):
        raise StabilityError("-A_bar is not Hurwitz")
    theta_star = -np.linalg.solve(A_bar, b_bar)
    reward = model.A_map @ theta_star + model.b_map
    cov = markov.asymptotic_covariance(model.chain, markov.solve_poisson(model.chain, reward))
    A_inv = np.linalg.inv(A_bar)
    limit = linalg.symmetrize(A_inv @ cov.matrix @ A_inv.T)
    return TDTarget(A_bar, b_bar, theta_star, cov.matrix, limit, cov.positive_definite)


def noise_poisson(model: TDModel) -> markov.PoissonSolution:
    """Matrix-valued Poisson solution ``V_A`` for the multiplicative noise ``A(x) - A_bar``."""
    return markov.solve_poisson(model.chain, model.A_map)


@dataclass(frozen=True)
class TDTrajectory:
    """``theta[k]`` for k = 0..n; ``theta_bar[k]`` is the mean of ``theta[1..k]`` (``theta_bar[0] = theta[0]``)."""

    theta: np.ndarray
    theta_bar: np.ndarray
    states: np.ndarray
    scaled_error: np.ndarray


def _theta0(model, theta0):
    if theta0 is None:
        return np.zeros(model.d)
    t = np.asarray(theta0, dtype=float).reshape(-1)
    if t.shape != (model.d,):
        raise DimensionError(f"theta0 must have dimension {model.d}")
    return t


def simulate_td(model: TDModel, n: int, theta0=None, start=None, seed=0, target: TDTarget | None = None) -> TDTrajectory:
    """Run the exact TD recursion for `n` steps along one sampled chain path."""
    states = markov.simulate_chain(model.chain, n, start, seed)
    eps = step_sizes(n, model.delta)
    theta = np.empty((n + 1, model.d))
    theta[0] = _theta0(model, theta0)
    A, b = model.A_map, model.b_map
    for k in range(n):
        x = states[k]
        theta[k + 1] = theta[k] - eps[k] * (A[x] @ theta[k] + b[x])
    theta_bar = np.empty_like(theta)
    theta_bar[0] = theta[0]
    theta_bar[1:] = np.cumsum(theta[1:], axis=0) / np.arange(1, n + 1)[:, None]
    target = target or mean_dynamics(model)
    scaled = np.sqrt(n) * (theta_bar[n] - target.theta_star) if n > 0 else np.zeros(model.d)
    return TDTrajectory(theta, theta_bar, states, scaled)


def _ensemble_chunk(model, n, read_at, theta0, start, gens, theta_star):
    """Simulate one chunk of replicates; returns averages and iterates at `read_at` steps."""
    R = len(gens)
    eps = step_sizes(n, model.delta)
    A, b = model.A_map, model.b_map
    theta = np.tile(theta0, (R, 1))
    acc = np.zeros_like(theta)
    reads = {int(k): i for i, k in enumerate(read_at)}
    bars = np.empty((len(read_at), R, model.d))
    deltas = np.empty((len(read_at), R, model.d))
    if 0 in reads:
        bars[reads[0]] = theta
        deltas[reads[0]] = theta - theta_star
    scalar = model.d == 1
    a1, b1 = A[:, 0, 0], b[:, 0]
    for k, x in enumerate(markov.batch_states(model.chain, gens, n - 1, start)):
        if scalar:
            theta[:, 0] -= eps[k] * (a1[x] * theta[:, 0] + b1[x])
        else:
            theta -= eps[k] * (np.einsum("rij,rj->ri", A[x], theta) + b[x])
        acc += theta
        i = reads.get(k + 1)
        if i is not None:
            bars[i] = acc / (k + 1)
            deltas[i] = theta - theta_star
    return bars, deltas


def simulate_ensemble(
    model: TDModel,
    n: int,
    replicates: int,
    seed: int,
    experiment: int = 0,
    read_at=None,
    theta0=None,
    start=None,
    threads: int = 1,
    target: TDTarget | None = None,
):
    """Independent TD runs, one counter-based stream per replicate.

    Replicate ``r`` draws from ``rng.stream(seed, experiment, r, rng.CHAIN)``
    and is bit-identical to :func:`simulate_td` with that generator.

    Returns
    -------
    theta_bar, delta : ndarray, shape ``(len(read_at), replicates, d)``
        Averaged iterate ``theta_bar_k`` and error ``theta_k - theta*`` at
        each read point (default: only ``k = n``).
    """
    target = target or mean_dynamics(model)
    read_at = [n] if read_at is None else sorted(int(k) for k in read_at)
    if read_at and (read_at[0] < 0 or read_at[-1] > n):
        raise DomainError("read points must lie in [0, n]")
    t0 = _theta0(model, theta0)
    if n < 1:
        raise DomainError("ensemble horizon n must be positive")
    gens = [rng.stream(seed, experiment, r, rng.CHAIN) for r in range(replicates)]
    job = lambda g: _ensemble_chunk(model, n, read_at, t0, start, g, target.theta_star)  # noqa: E731
    parts = run_chunks(job, gens, threads)
    bars = np.concatenate([p[0] for p in parts], axis=1)
    deltas = np.concatenate([p[1] for p in parts], axis=1)
    return bars, deltas


def _index_check(j, n):
    if not 0 <= j < n:
        raise DomainError(f"need 0 <= j < n, got j={j}, n={n}")


def _abar(A_bar):
    A_bar = np.atleast_2d(np.asarray(A_bar, dtype=float))
    if A_bar.shape[0] != A_bar.shape[1]:
        raise DimensionError("A_bar must be square")
    return A_bar


def upsilon(j: int, n: int, delta: float, A_bar) -> np.ndarray:
    """``eps_j sum_{k=j+1}^{n} prod_{l=j+1}^{k-1} (I - eps_l A_bar) - A_bar^{-1}``.

    Empty products are the identity. The running product is accumulated
    left to right, O(n - j) matrix multiplies.
    """
    _index_check(j, n)
    A_bar = _abar(A_bar)
    eye = np.eye(len(A_bar))
    prod = eye.copy()
    total = np.zeros_like(eye)
    for k in range(j + 1, n + 1):
        if k > j + 1:
            prod = prod @ (eye - step_size(k - 1, delta) * A_bar)
        total += prod
    return step_size(j, delta) * total - np.linalg.inv(A_bar)


def phi(j: int, n: int, delta: float, A_bar) -> np.ndarray:
    """``eps_j sum_{k=j}^{n-1} prod_{l=j}^{k-1} (I - eps_l A_bar) - A_bar^{-1}``."""
    _index_check(j, n)
    A_bar = _abar(A_bar)
    eye = np.eye(len(A_bar))
    prod = eye.copy()
    total = np.zeros_like(eye)
    for k in range(j, n):
        if k > j:
            prod = prod @ (eye - step_size(k - 1, delta) * A_bar)
        total += prod
    return step_size(j, delta) * total - np.linalg.inv(A_bar)


def upsilon_all(n: int, delta: float, A_bar) -> np.ndarray:
    """``Upsilon_j^n`` for every ``j = 0..n-1``, shape ``(n, d, d)``.

    Uses the suffix recursion ``S_j = I + (I - eps_{j+1} A_bar) S_{j+1}``,
    ``S_{n-1} = I``, valid because all factors are polynomials in ``A_bar``
    and commute.
    """
    if n < 1:
        raise DomainError("n must be positive")
    A_bar = _abar(A_bar)
    d = len(A_bar)
    eye = np.eye(d)
    eps = step_sizes(n + 1, delta)
    A_inv = np.linalg.inv(A_bar)
    out = np.empty((n, d, d))
    S = eye.copy()
    out[n - 1] = eps[n - 1] * S - A_inv
    for j in range(n - 2, -1, -1):
        S = eye + (eye - eps[j + 1] * A_bar) @ S
        out[j] = eps[j] * S - A_inv
    return out


def upsilon_difference(j: int, n: int, delta: float, A_bar) -> np.ndarray:
    """Closed form of ``Upsilon_{j+1}^n - Upsilon_j^n``.

    ``eps_{j+1} (U_{j+1} + A^{-1}) A - eps_{j+1} I + ((eps_{j+1} - eps_j)/eps_j) (U_j + A^{-1})``
    """
    if not 0 <= j < j + 1 < n:
        raise DomainError(f"need 0 <= j and j + 1 < n, got j={j}, n={n}")
    A_bar = _abar(A_bar)
    A_inv = np.linalg.inv(A_bar)
    e0, e1 = step_size(j, delta), step_size(j + 1, delta)
    U0 = upsilon(j, n, delta, A_bar)
    U1 = upsilon(j + 1, n, delta, A_bar)
    return e1 * (U1 + A_inv) @ A_bar - e1 * np.eye(len(A_bar)) + ((e1 - e0) / e0) * (U0 + A_inv)


def upsilon_norms(n: int, delta: float, A_bar) -> np.ndarray:
    """Operator norms ``||Upsilon_j^n||_op`` for ``j = 0..n-1``."""
    U = upsilon_all(n, delta, A_bar)
    if U.shape[1] == 1:
        return np.abs(U[:, 0, 0])
    return np.linalg.norm(U, ord=2, axis=(1, 2))


def upsilon_decay_curve(t_grid, delta: float, A_bar) -> RateReport:
    """``(1/t) sum_{j<t} ||Upsilon_j^t||_op^2`` on a grid of horizons, with its log-log slope."""
    _check_delta(delta)
    vals = [float(np.mean(upsilon_norms(int(t), delta, A_bar) ** 2)) for t in t_grid]
    return RateReport.fit(t_grid, vals)


def delta_moment_curve(
    model: TDModel, k_grid, replicates: int, seed: int, theta0=None, start=None, threads: int = 1,
    experiment: int = 0,
) -> RateReport:
    """Ensemble estimate of ``E||theta_k - theta*||^2`` along one long run per replicate."""
    k_grid = [int(k) for k in k_grid]
    _, deltas = simulate_ensemble(
        model, max(k_grid), replicates, seed, experiment, read_at=k_grid,
        theta0=theta0, start=start, threads=threads,
    )
    sq = np.sum(deltas**2, axis=2)  # (grid, replicates)
    se = sq.std(axis=1, ddof=1) / np.sqrt(replicates) if replicates > 1 else np.zeros(len(k_grid))
    return RateReport.fit(k_grid, sq.mean(axis=1), se)

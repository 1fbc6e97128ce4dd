"""Finite Markov chains and their Poisson equation.

The Poisson equation ``V - P V = r - 1 r_bar^T`` is solved with the
fundamental-matrix route, which is exact for finite irreducible chains.
Its solution turns centered reward sums into a martingale (the increments
``m_k = V(X_k) - (P V)(X_{k-1})``) plus a bounded telescoping remainder,
and yields the asymptotic covariance of the chain's CLT.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from math import gcd
from typing import Iterator, Sequence

import numpy as np

from . import linalg
from .errors import DimensionError, DomainError, StructureError
from .rng import as_generator

ROW_SUM_TOL = 1e-12
# TV distances below this are rounding noise and are ignored when fitting rho
TV_NOISE = 1e-14


@dataclass(frozen=True)
class FiniteMarkovChain:
    """Row-stochastic transition matrix with optional state labels."""

    P: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise DimensionError(f"transition matrix must be square and non-empty, got shape {P.shape}")
        bad = np.argwhere(~np.isfinite(P))
        if bad.size:
            i, j = bad[0]
            raise ValueError(f"P[{i}][{j}] is not finite")
        bad = np.argwhere(P < 0)
        if bad.size:
            i, j = bad[0]
            raise ValueError(f"P[{i}][{j}] = {float(P[i, j])!r} is negative")
        sums = P.sum(axis=1)
        for i, s in enumerate(sums):
            if abs(s - 1.0) > ROW_SUM_TOL:
                raise ValueError(f"row {i} of P sums to {float(s)!r}, expected 1")
        labels = tuple(self.labels) if self.labels else tuple(f"s{i}" for i in range(P.shape[0]))
        if len(labels) != P.shape[0]:
            raise DimensionError(f"{len(labels)} labels for {P.shape[0]} states")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "labels", labels)

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def cdf(self) -> np.ndarray:
        """Row-wise cumulative transition probabilities used for inverse-CDF sampling."""
        return _row_cdf(self.P)


def _row_cdf(P):
    cdf = np.cumsum(P, axis=1)
    # pin everything from the last positive entry onward to exactly 1 so that
    # zero-probability trailing states can never be drawn
    for i in range(P.shape[0]):
        last = np.nonzero(P[i] > 0)[0][-1]
        cdf[i, last:] = 1.0
    cdf.setflags(write=False)
    return cdf


def _reachable(adj, start=0):
    seen = np.zeros(adj.shape[0], dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        u = stack.pop()
        for v in np.nonzero(adj[u])[0]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return seen


def is_irreducible(chain: FiniteMarkovChain) -> bool:
    adj = chain.P > 0
    return bool(_reachable(adj).all() and _reachable(adj.T).all())


def period(chain: FiniteMarkovChain) -> int:
    """Period of an irreducible chain, from BFS levels rooted at state 0."""
    adj = chain.P > 0
    level = np.full(chain.n_states, -1)
    level[0] = 0
    order = [0]
    for u in order:
        for v in np.nonzero(adj[u])[0]:
            if level[v] < 0:
                level[v] = level[u] + 1
                order.append(v)
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        if level[u] >= 0 and level[v] >= 0:
            g = gcd(g, int(level[u] + 1 - level[v]))
    return abs(g)


def _require_irreducible(chain):
    if not is_irreducible(chain):
        raise StructureError("chain is reducible (support graph is not strongly connected)")


def _require_ergodic(chain):
    _require_irreducible(chain)
    p = period(chain)
    if p != 1:
        raise StructureError(f"chain is periodic with period {p}")


def stationary(chain: FiniteMarkovChain) -> np.ndarray:
    """Unique stationary distribution of an irreducible chain.

    Solves ``pi^T (I - P + 1 1^T) = 1^T``, which is nonsingular exactly when
    the chain is irreducible.
    """
    _require_irreducible(chain)
    S = chain.n_states
    M = np.eye(S) - chain.P + np.ones((S, S))
    pi = np.linalg.solve(M.T, np.ones(S))
    # one step of iterative refinement
    pi += np.linalg.solve(M.T, np.ones(S) - M.T @ pi)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def state_distributions(chain: FiniteMarkovChain, start, n: int) -> np.ndarray:
    """Marginal laws of ``X_0 .. X_n`` as an ``(n + 1, S)`` array.

    Once the marginal has converged to pi to machine precision the
    remaining rows are filled with pi instead of iterating.
    """
    pi = stationary(chain)
    p = start_distribution(chain, start)
    out = np.empty((n + 1, chain.n_states))
    for k in range(n + 1):
        out[k] = p
        if np.max(np.abs(p - pi)) < 1e-17:
            out[k:] = pi
            break
        p = p @ chain.P
    return out


def start_distribution(chain, start) -> np.ndarray:
    """Normalize a start spec: ``None`` (stationary), a state index, or a distribution."""
    S = chain.n_states
    if start is None:
        return stationary(chain)
    if np.ndim(start) == 0:
        i = int(start)
        if not 0 <= i < S:
            raise DomainError(f"start state {i} out of range [0, {S})")
        p = np.zeros(S)
        p[i] = 1.0
        return p
    p = np.asarray(start, dtype=float)
    if p.shape != (S,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("start distribution must be a probability vector over the states")
    return p / p.sum()


@dataclass(frozen=True)
class MixingReport:
    rho: float
    K1: float
    tv_curve: np.ndarray


def mixing_report(chain: FiniteMarkovChain, horizon: int) -> MixingReport:
    """Worst-case total variation to stationarity and a geometric envelope.

    ``tv_curve[n] = max_x TV(P^n(x, .), pi)`` for ``n = 0..horizon``. The
    envelope uses ``K1 = tv_curve[0]`` and the smallest ``rho`` with
    ``tv_curve[n] <= K1 * rho**n`` over the measured horizon.
    """
    _require_ergodic(chain)
    pi = stationary(chain)
    Pn = np.eye(chain.n_states)
    tv = np.empty(horizon + 1)
    for n in range(horizon + 1):
        tv[n] = 0.5 * np.abs(Pn - pi).sum(axis=1).max()
        Pn = Pn @ chain.P
    K1 = float(tv[0])
    rho = 0.0
    if K1 > 0:
        for n in range(1, horizon + 1):
            if tv[n] > TV_NOISE:
                rho = max(rho, (tv[n] / K1) ** (1.0 / n))
    return MixingReport(rho=float(min(rho, 1.0)), K1=K1, tv_curve=tv)


@dataclass(frozen=True)
class PoissonSolution:
    """pi-centered solution of the Poisson equation for a (vector or matrix) reward.

    ``V[x]`` has the shape of a single reward value; ``PV[x] = E(V(X_1) | X_0 = x)``.
    """

    V: np.ndarray
    r_bar: np.ndarray
    pi: np.ndarray
    PV: np.ndarray

    @property
    def M_V(self) -> float:
        """Largest norm of ``V`` over states (Euclidean, or operator norm for matrices)."""
        if self.V.ndim == 3:
            return max(linalg.operator_norm(v) for v in self.V)
        return float(np.max(np.linalg.norm(self.V.reshape(len(self.V), -1), axis=1)))


def _as_reward(chain, reward):
    r = np.asarray(reward, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    if r.ndim not in (2, 3) or r.shape[0] != chain.n_states:
        raise DimensionError(
            f"reward must have one entry per state ({chain.n_states}), got shape {r.shape}"
        )
    if r.ndim == 3 and r.shape[1] != r.shape[2]:
        raise DimensionError(f"matrix rewards must be square, got {r.shape[1:]}")
    if not np.all(np.isfinite(r)):
        raise ValueError("reward has non-finite entries")
    return r


def solve_poisson(chain: FiniteMarkovChain, reward) -> PoissonSolution:
    """Solve ``r_bar = r(x) + E(V(X_1) | X_0 = x) - V(x)`` for every state.

    Parameters
    ----------
    chain : FiniteMarkovChain
        Irreducible, aperiodic chain.
    reward : array_like
        Shape ``(S,)`` or ``(S, d)`` for vector rewards, ``(S, d, d)`` for
        matrix rewards. Matrix rewards are flattened and solved entrywise.

    Returns
    -------
    PoissonSolution
        With ``pi @ V == 0`` (centering).
    """
    _require_ergodic(chain)
    r = _as_reward(chain, reward)
    shape = r.shape[1:]
    S = chain.n_states
    flat = r.reshape(S, -1)
    pi = stationary(chain)
    r_bar = pi @ flat
    rhs = flat - r_bar
    Z = np.eye(S) - chain.P + np.outer(np.ones(S), pi)
    V = np.linalg.solve(Z, rhs)
    V += np.linalg.solve(Z, rhs - (V - chain.P @ V))
    V -= pi @ V
    PV = chain.P @ V
    return PoissonSolution(
        V=V.reshape((S,) + shape),
        r_bar=r_bar.reshape(shape),
        pi=pi,
        PV=PV.reshape((S,) + shape),
    )


def poisson_residual(chain, reward, sol: PoissonSolution) -> float:
    """Max-abs residual of ``(V - PV) - (r - r_bar)``."""
    S = chain.n_states
    r = _as_reward(chain, reward).reshape(S, -1)
    V = sol.V.reshape(S, -1)
    return float(np.max(np.abs(V - chain.P @ V - (r - sol.r_bar.reshape(-1)))))


def _vector_solution(sol):
    if sol.V.ndim != 2:
        raise DimensionError("a vector-valued Poisson solution is required")
    return sol.V, sol.PV


def conditional_covariances(chain: FiniteMarkovChain, sol: PoissonSolution) -> np.ndarray:
    """``Sigma(i) = sum_j P_ij (V(j) - PV(i)) (V(j) - PV(i))^T`` for every state, shape ``(S, d, d)``."""
    V, PV = _vector_solution(sol)
    D = V[None, :, :] - PV[:, None, :]  # (i, j, d)
    return np.einsum("ij,ija,ijb->iab", chain.P, D, D)


def conditional_covariance(chain: FiniteMarkovChain, sol: PoissonSolution, state: int) -> np.ndarray:
    if not 0 <= int(state) < chain.n_states:
        raise DomainError(f"state {state} out of range [0, {chain.n_states})")
    V, PV = _vector_solution(sol)
    D = V - PV[int(state)]
    return np.einsum("j,ja,jb->ab", chain.P[int(state)], D, D)


@dataclass(frozen=True)
class AsymptoticCovariance:
    matrix: np.ndarray
    positive_definite: bool

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def asymptotic_covariance(chain: FiniteMarkovChain, sol: PoissonSolution) -> AsymptoticCovariance:
    """``Sigma_inf = sum_{i,j} pi_i P_ij (V(j) - PV(i)) (V(j) - PV(i))^T``.

    A singular result is returned with ``positive_definite=False`` rather
    than raised; callers that need a nondegenerate CLT decide what to do.
    """
    cov = linalg.symmetrize(np.einsum("i,iab->ab", sol.pi, conditional_covariances(chain, sol)))
    return AsymptoticCovariance(matrix=cov, positive_definite=linalg.is_positive_definite(cov))


def _draw_start(cdf_start, start_idx, gen):
    if start_idx is not None:
        return start_idx
    return bisect.bisect_right(cdf_start, gen.random())


def _start_spec(chain, start):
    """Return ``(index, None)`` for a fixed start, or ``(None, cdf)`` for a random one."""
    if start is not None and np.ndim(start) == 0:
        p = start_distribution(chain, start)
        return int(np.argmax(p)), None
    p = start_distribution(chain, start)
    c = np.cumsum(p)
    c[np.nonzero(p > 0)[0][-1]:] = 1.0
    return None, c.tolist()


def simulate_chain(chain: FiniteMarkovChain, n: int, start=None, seed=0) -> np.ndarray:
    """Sample ``X_0..X_n`` with one uniform per transition (inverse CDF on the row).

    `start` is a state index, a distribution, or ``None`` for pi; a random
    start consumes one extra uniform before the transitions.
    """
    gen = as_generator(seed)
    idx, cstart = _start_spec(chain, start)
    cdf = [row.tolist() for row in chain.cdf]
    path = np.empty(n + 1, dtype=np.int64)
    x = _draw_start(cstart, idx, gen)
    path[0] = x
    u = gen.random(n)
    for k in range(n):
        x = bisect.bisect_right(cdf[x], u[k])
        path[k + 1] = x
    return path


def batch_states(
    chain: FiniteMarkovChain,
    generators: Sequence[np.random.Generator],
    n: int,
    start=None,
    block: int = 4096,
) -> Iterator[np.ndarray]:
    """Yield the state vector ``X_k`` (one entry per generator) for ``k = 0..n``.

    Stream consumption matches :func:`simulate_chain` exactly, so replicate
    ``r`` here reproduces ``simulate_chain(..., seed=generators[r])``.
    """
    idx, cstart = _start_spec(chain, start)
    cdf = chain.cdf
    x = np.array([_draw_start(cstart, idx, g) for g in generators], dtype=np.int64)
    yield x
    done = 0
    while done < n:
        b = min(block, n - done)
        U = np.stack([g.random(b) for g in generators])
        for t in range(b):
            x = (cdf[x] <= U[:, t, None]).sum(axis=1)
            yield x
        done += b


def ensemble_reward_sums(chain, reward, n: int, generators, start=None) -> np.ndarray:
    """``sum_{k=0}^{n-1} r(X_k)`` for one path per generator, shape ``(R, d)``."""
    r = _as_reward(chain, reward)
    if r.ndim != 2:
        raise DimensionError("ensemble_reward_sums needs a vector reward")
    if n < 1:
        raise DomainError("n must be positive")
    acc = np.zeros((len(generators), r.shape[1]))
    for x in batch_states(chain, generators, n - 1, start):
        acc += r[x]
    return acc


def martingale_increments(chain: FiniteMarkovChain, sol: PoissonSolution, path) -> np.ndarray:
    """``m_k = V(X_k) - (PV)(X_{k-1})`` for ``k = 1..n``."""
    path = np.asarray(path)
    if path.min() < 0 or path.max() >= chain.n_states:
        raise DimensionError("path visits a state outside the chain")
    return sol.V[path[1:]] - sol.PV[path[:-1]]


def partial_sum_law(chain: FiniteMarkovChain, reward, n: int, start=None):
    """Exact law of ``sum_{k=0}^{n-1} r(X_k)`` for an integer-valued scalar reward.

    Forward recursion over (state, running sum); cost O(n^2 S (max r - min r)).

    Returns
    -------
    values : ndarray of int
        Support points of the sum.
    pmf : ndarray
        Their probabilities.
    """
    r = _as_reward(chain, reward)
    if r.shape[1:] != (1,):
        raise DimensionError("partial_sum_law needs a scalar reward")
    r = r[:, 0]
    if not np.allclose(r, np.round(r), rtol=0, atol=1e-12):
        raise DomainError("partial_sum_law needs integer-valued rewards")
    r = np.round(r).astype(np.int64)
    lo = int(r.min())
    shift = r - lo
    width = n * int(r.max() - lo) + 1
    f = np.zeros((chain.n_states, width))
    f[:, 0] = start_distribution(chain, start)
    PT = chain.P.T
    for k in range(n):
        g = np.zeros_like(f)
        for s in range(chain.n_states):
            h = int(shift[s])
            g[s, h:] = f[s, : width - h]
        f = PT @ g if k < n - 1 else g
    pmf = f.sum(axis=0)
    values = np.arange(width) + n * lo
    keep = pmf > 0
    return values[keep], pmf[keep]

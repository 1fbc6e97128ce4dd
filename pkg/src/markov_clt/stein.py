"""Stein-method constants and the non-asymptotic martingale CLT bound.

The bound evaluated here is

    (1/sqrt n) sum_k [ C1~ s E||S^{-1/2} m_k||^{2+beta} / (n-k+1)^{(1+beta)/2}
                     + C2~ s E||S^{-1/2} m_k||^{beta}   / (n-k+1)^{(1+beta)/2}
                     + C sqrt(d) s ||S^{-1/2} E(Sigma_k) S^{-1/2} - I||_HS ]

with ``S = Sigma_inf`` and ``s = ||S^{1/2}||_op``. The signed trace term
involving the Hessian of the Stein solution is never evaluated; only its
operator-norm majorant (the third summand) is used, with the unspecified
universal constant ``C`` exposed as ``c_universal``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, lgamma, log, pi, sqrt

import numpy as np

from . import linalg, markov
from .errors import DimensionError, DomainError
from .stats import gaussian_samples


@dataclass(frozen=True)
class SteinConstants:
    d: int
    beta: float
    C1: float
    C2: float
    C1_tilde: float
    C2_tilde: float
    C_universal: float = 1.0


def stein_constants(d: int, beta: float, c_universal: float = 1.0) -> SteinConstants:
    """Regularity constants of the Stein solution for a Lipschitz test function.

    ``C1 = 2^{3/2} (1 + 2 d Gamma((1+d)/2)) / (d Gamma(d/2))``,
    ``C2 = 2 sqrt(2d/pi)``, ``C1~ = C1 + 2/(1-beta)``, ``C2~ = C2 + 2d/(1-beta)``.
    """
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d}")
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    if c_universal <= 0:
        raise DomainError("c_universal must be positive")
    d = int(d)
    # Gamma((1+d)/2) / Gamma(d/2) via log-gamma so large d does not overflow
    ratio = exp(lgamma((1 + d) / 2) - lgamma(d / 2))
    C1 = 2 ** 1.5 * (1.0 / (d * exp(lgamma(d / 2))) + 2.0 * ratio)
    C2 = 2.0 * sqrt(2.0 * d / pi)
    return SteinConstants(
        d=d,
        beta=float(beta),
        C1=C1,
        C2=C2,
        C1_tilde=C1 + 2.0 / (1.0 - beta),
        C2_tilde=C2 + 2.0 * d / (1.0 - beta),
        C_universal=float(c_universal),
    )


def beta_schedule(n: int) -> float:
    """``beta = 1 - 2/log n``, which keeps C1~ and C2~ of order log n."""
    if n < 2 or log(n) <= 2.0:
        raise DomainError(f"beta schedule needs log n > 2 (n >= 8), got n={n}")
    return 1.0 - 2.0 / log(n)


@dataclass(frozen=True)
class MartingaleStats:
    """Per-step summaries of the normalized increments ``Sigma_inf^{-1/2} m_k``, k = 1..n."""

    n: int
    moment_2beta: np.ndarray
    moment_beta: np.ndarray
    cov_error_hs: np.ndarray
    sigma_inf_sqrt_opnorm: float

    def __post_init__(self):
        for name in ("moment_2beta", "moment_beta", "cov_error_hs"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (self.n,):
                raise DimensionError(f"{name} has length {a.size}, expected n={self.n}")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite and non-negative")
            object.__setattr__(self, name, a)


def martingale_clt_bound(stats: MartingaleStats, constants: SteinConstants) -> float:
    """Evaluate the Wasserstein bound on ``d_W(W_n, Sigma_inf^{1/2} Z)``."""
    n = stats.n
    if n < 1:
        raise DomainError("n must be positive")
    k = np.arange(1, n + 1)
    w = (n - k + 1.0) ** (-(1.0 + constants.beta) / 2.0)
    s = stats.sigma_inf_sqrt_opnorm
    smooth = constants.C1_tilde * np.sum(w * stats.moment_2beta) + constants.C2_tilde * np.sum(
        w * stats.moment_beta
    )
    cov = constants.C_universal * sqrt(constants.d) * np.sum(stats.cov_error_hs)
    return float(s * (smooth + cov) / sqrt(n))


def martingale_stats(
    chain: markov.FiniteMarkovChain,
    sol: markov.PoissonSolution,
    sigma_inf,
    beta: float,
    n: int,
    start=None,
) -> MartingaleStats:
    """Exact per-step moments of the Poisson martingale of a finite chain.

    Expectations are taken over the marginal law of ``X_{k-1}`` (started
    from `start`) and the transition row, so no sampling error enters.
    """
    sigma_inf = np.atleast_2d(np.asarray(sigma_inf, dtype=float))
    root_inv = linalg.inv_sqrt_pd(sigma_inf)
    V, PV = sol.V, sol.PV
    if V.ndim != 2 or V.shape[1] != sigma_inf.shape[0]:
        raise DimensionError("Poisson solution and Sigma_inf dimensions disagree")
    D = (V[None, :, :] - PV[:, None, :]) @ root_inv  # (i, j, d), root_inv symmetric
    norms = np.linalg.norm(D, axis=2)
    g2b = np.sum(chain.P * norms ** (2.0 + beta), axis=1)
    gb = np.sum(chain.P * norms ** beta, axis=1)
    B = root_inv @ markov.conditional_covariances(chain, sol) @ root_inv - np.eye(len(sigma_inf))
    marg = markov.state_distributions(chain, start, n - 1)  # law of X_{k-1}, k = 1..n
    E = np.einsum("ki,iab->kab", marg, B)
    return MartingaleStats(
        n=n,
        moment_2beta=marg @ g2b,
        moment_beta=marg @ gb,
        cov_error_hs=np.sqrt(np.sum(E * E, axis=(1, 2))),
        sigma_inf_sqrt_opnorm=linalg.operator_norm(linalg.sqrt_psd(sigma_inf)),
    )


def chain_bound(chain, sol, sigma_inf, n: int, beta="schedule", start=None, c_universal=1.0) -> float:
    """Martingale CLT bound for a chain at horizon `n`; ``beta="schedule"`` uses :func:`beta_schedule`."""
    b = beta_schedule(n) if beta == "schedule" else float(beta)
    sigma_inf = np.atleast_2d(sigma_inf)
    stats = martingale_stats(chain, sol, sigma_inf, b, n, start)
    return martingale_clt_bound(stats, stein_constants(sigma_inf.shape[0], b, c_universal))


@dataclass(frozen=True)
class OUGeneratorCheck:
    """Monte Carlo estimates of ``E[(generator f)(Z)]`` for each quadratic test function."""

    estimates: np.ndarray
    stderrs: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.estimates) / self.stderrs
        return np.where(self.stderrs > 0, z, np.where(self.estimates == 0, 0.0, np.inf))

    @property
    def max_abs_z(self) -> float:
        return float(np.max(self.z_scores))


def quadratic_basis(d: int) -> list[np.ndarray]:
    """The identity followed by the symmetric unit matrices ``E_ii`` and ``E_ij + E_ji``."""
    basis = [np.eye(d)]
    for i in range(d):
        for j in range(i, d):
            Q = np.zeros((d, d))
            Q[i, j] = Q[j, i] = 1.0
            basis.append(Q)
    return basis


def ou_generator_check(A, BBt, samples: int, seed=0, test_matrices=None) -> OUGeneratorCheck:
    """Check that the O-U generator has zero mean under its stationary Gaussian.

    Draws ``Z ~ N(0, Sigma)`` with ``Sigma`` solving the Lyapunov equation for
    ``(A, BBt)`` and averages ``grad f(Z)^T A Z + Tr(hess f(Z) BBt) / 2`` for
    ``f(x) = x^T Q x``, i.e. ``2 Z^T Q A Z + Tr(Q BBt)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    BBt = np.atleast_2d(np.asarray(BBt, dtype=float))
    linalg.sqrt_psd(BBt)  # PSD check
    sigma = linalg.solve_lyapunov(A, BBt)
    Z = gaussian_samples(sigma, samples, seed)
    mats = quadratic_basis(A.shape[0]) if test_matrices is None else test_matrices
    est, se = [], []
    for Q in mats:
        Q = linalg.symmetrize(Q)
        vals = 2.0 * np.einsum("ni,ij,nj->n", Z, Q @ A, Z) + np.trace(Q @ BBt)
        est.append(vals.mean())
        se.append(vals.std(ddof=1) / sqrt(samples))
    return OUGeneratorCheck(np.array(est), np.array(se))

import numpy as np
import pytest
from conftest import random_chain
from hypothesis import given, settings
from hypothesis import strategies as st

from markov_clt import markov, rng, td
from markov_clt.errors import DimensionError, DomainError, StabilityError
from markov_clt.markov import FiniteMarkovChain


def noise_free_model(A_bar, b_bar, delta=0.75):
    chain = FiniteMarkovChain([[0.5, 0.5], [0.5, 0.5]])
    A = np.atleast_2d(A_bar)
    b = np.atleast_1d(b_bar)
    return td.TDModel(chain, np.stack([A, A]), np.stack([b, b]), delta)


def random_model(gen, S, d, delta=0.75):
    chain = random_chain(gen, S)
    M = gen.standard_normal((d, d))
    base = M @ M.T + np.eye(d)
    A = np.stack([base + 0.3 * gen.standard_normal((d, d)) for _ in range(S)])
    return td.TDModel(chain, A, gen.standard_normal((S, d)), delta)


def test_step_size():
    assert td.step_size(0, 0.6) == 1.0
    assert td.step_size(3, 0.75) == pytest.approx(4**-0.75)
    with pytest.raises(DomainError):
        td.step_size(3, 0.5)
    with pytest.raises(DomainError):
        td.step_size(3, 1.0)



@pytest.mark.parametrize("delta", [0.55, 0.75, 0.95])
def test_step_size_relative_decrement(delta):
    """(1+x)^delta <= 1 + delta x gives (eps_j - eps_{j+1}) / eps_{j+1} <= delta / (j+1)."""
    eps = td.step_sizes(2000, delta)
    j = np.arange(1999)
    dec = eps[:-1] - eps[1:]
    assert np.all(dec / eps[1:] <= delta / (j + 1) + 1e-15)
    assert np.all(dec / eps[:-1] <= delta / (j + 1) + 1e-15)
    # the sharper delta / (j+2) version does not hold at j = 0
    assert dec[0] / eps[0] > delta / 2


def test_model_validation(two_state):
    with pytest.raises(StabilityError):
        td.TDModel(two_state, [-1.0, -1.0], [0.0, 0.0])
    with pytest.raises(DimensionError):
        td.TDModel(two_state, np.ones((2, 2, 2)), np.ones((2, 3)))
    with pytest.raises(DomainError):
        td.TDModel(two_state, [1.0, 1.0], [0.0, 0.0], delta=0.4)


def test_mean_dynamics_examples(scalar_td_model):
    tgt = td.mean_dynamics(scalar_td_model)
    assert tgt.A_bar[0, 0] == pytest.approx(2.0) and tgt.theta_star[0] == pytest.approx(1.0)
    free = td.mean_dynamics(noise_free_model([[2.0, 0.5], [0.0, 1.0]], [1.0, -1.0]))
    np.testing.assert_allclose(free.theta_star, -np.linalg.solve([[2.0, 0.5], [0.0, 1.0]], [1.0, -1.0]))
    np.testing.assert_allclose(free.sigma_inf, 0, atol=1e-14)
    assert free.sigma_inf_pd is False


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_mean_dynamics_fixed_point(S, d, seed):
    tgt = td.mean_dynamics(random_model(np.random.default_rng(seed), S, d))
    assert np.max(np.abs(tgt.A_bar @ tgt.theta_star + tgt.b_bar)) <= 1e-10
    assert np.allclose(tgt.limit_cov, tgt.limit_cov.T)
    assert np.linalg.eigvalsh(tgt.limit_cov).min() >= -1e-12


def test_simulate_td_fixed_point():
    model = noise_free_model([[1.5]], [-3.0])
    traj = td.simulate_td(model, 200, theta0=[2.0], seed=1)
    np.testing.assert_allclose(traj.theta, 2.0, atol=1e-14)
    np.testing.assert_allclose(traj.scaled_error, 0, atol=1e-12)


@pytest.mark.parametrize("a", [1.0, 0.5])
def test_simulate_td_noise_free_monotone(a):
    # theta* = 1; Delta_k = Delta_0 prod_{l<k} (1 - eps_l a). With a = 1 the
    # first step (eps_0 = 1) lands exactly on theta*.
    model = noise_free_model([[a]], [-a])
    traj = td.simulate_td(model, 500, theta0=[0.0], seed=0)
    theta = traj.theta[:, 0]
    assert np.all(np.diff(theta) >= 0) and np.all(theta <= 1.0)
    if a < 1:
        assert np.all(np.diff(theta) > 0) and np.all(theta < 1.0)
    eps = td.step_sizes(500, 0.75)
    closed = 1.0 - np.concatenate([[1.0], np.cumprod(1 - a * eps)])
    np.testing.assert_allclose(theta, closed, atol=1e-13)


def test_simulate_td_determinism_and_averaging(scalar_td_model):
    a = td.simulate_td(scalar_td_model, 300, seed=5)
    b = td.simulate_td(scalar_td_model, 300, seed=5)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.states, b.states)
    for k in (1, 17, 300):
        assert a.theta_bar[k] == pytest.approx(a.theta[1 : k + 1].mean(axis=0), abs=1e-10)
    assert a.scaled_error == pytest.approx(np.sqrt(300) * (a.theta_bar[300] - 1.0))


def test_ensemble_matches_single_runs_and_threads():
    model = random_model(np.random.default_rng(1), 3, 2)
    bars, deltas = td.simulate_ensemble(model, 400, 600, seed=7, experiment=3, read_at=[50, 400])
    tgt = td.mean_dynamics(model)
    for r in (0, 513, 599):
        tr = td.simulate_td(model, 400, seed=rng.stream(7, 3, r, rng.CHAIN))
        np.testing.assert_allclose(bars[1, r], tr.theta_bar[400], rtol=1e-12)
        np.testing.assert_allclose(bars[0, r], tr.theta_bar[50], rtol=1e-12)
        np.testing.assert_allclose(deltas[1, r], tr.theta[400] - tgt.theta_star, rtol=1e-12, atol=1e-14)
    bars8, _ = td.simulate_ensemble(model, 400, 600, seed=7, experiment=3, read_at=[50, 400], threads=8)
    assert np.array_equal(bars, bars8)
    with pytest.raises(DomainError):
        td.simulate_ensemble(model, 0, 5, seed=0)


def test_telescoping_identity(scalar_td_model):
    VA = td.noise_poisson(scalar_td_model)
    assert markov.poisson_residual(scalar_td_model.chain, scalar_td_model.A_map, VA) <= 1e-12
    traj = td.simulate_td(scalar_td_model, 500, theta0=[3.0], seed=2)
    delta = traj.theta - 1.0
    X = traj.states
    terms = [VA.V[X[j]] @ delta[j] - VA.V[X[j + 1]] @ delta[j + 1] for j in range(500)]
    np.testing.assert_allclose(np.sum(terms, axis=0), VA.V[X[0]] @ delta[0] - VA.V[X[500]] @ delta[500], atol=1e-10)


def naive_upsilon(j, n, delta, a):
    eps = lambda k: (k + 1.0) ** -delta  # noqa: E731
    total = 0.0
    for k in range(j + 1, n + 1):
        prod = 1.0
        for l in range(j + 1, k):
            prod *= 1 - eps(l) * a
        total += prod
    return eps(j) * total - 1 / a


def test_upsilon_phi_boundary_cases():
    A = np.array([[2.0, 0.3], [0.0, 1.0]])
    Ainv = np.linalg.inv(A)
    np.testing.assert_allclose(td.upsilon(9, 10, 0.7, A), td.step_size(9, 0.7) * np.eye(2) - Ainv, atol=1e-15)
    np.testing.assert_allclose(td.phi(4, 5, 0.7, A), td.step_size(4, 0.7) * np.eye(2) - Ainv, atol=1e-15)
    with pytest.raises(DomainError):
        td.upsilon(5, 5, 0.7, A)


def test_upsilon_naive_oracle():
    assert td.upsilon(0, 100, 0.75, 1.0)[0, 0] == pytest.approx(naive_upsilon(0, 100, 0.75, 1.0), abs=1e-12)


def test_upsilon_all_matches_running_products():
    A = np.array([[1.5, 0.4], [-0.2, 0.8]])
    U = td.upsilon_all(60, 0.65, A)
    for j in (0, 1, 30, 58, 59):
        np.testing.assert_allclose(U[j], td.upsilon(j, 60, 0.65, A), atol=1e-12)


def test_upsilon_phi_relation():
    """Definitions imply Upsilon_j^n + A^{-1} = (eps_j / eps_{j+1}) (Phi_{j+1}^{n+1} + A^{-1})."""
    for a in (0.5, 1.0, 2.0):
        for n in (10, 50):
            for j in (0, 5, n - 2):
                ej, ej1 = td.step_size(j, 0.75), td.step_size(j + 1, 0.75)
                lhs = td.upsilon(j, n, 0.75, a)[0, 0] + 1 / a
                rhs = ej / ej1 * (td.phi(j + 1, n + 1, 0.75, a)[0, 0] + 1 / a)
                assert lhs == pytest.approx(rhs, abs=1e-10)


def test_unshifted_relation_is_recorded_as_failing():
    """The literal form Upsilon_j^n = (eps_j/eps_{j+1}) Phi_j^{n+1} does not hold for these definitions."""
    ej, ej1 = td.step_size(5, 0.75), td.step_size(6, 0.75)
    gap = abs(td.upsilon(5, 50, 0.75, 1.0)[0, 0] - ej / ej1 * td.phi(5, 51, 0.75, 1.0)[0, 0])
    assert gap > 1e-3


def test_upsilon_difference():
    A = np.array([[1.0, 0.2], [0.1, 1.3]])
    for a in (1.0, A):
        for n in (10, 50):
            for j in range(0, n - 1):
                direct = td.upsilon(j + 1, n, 0.75, a) - td.upsilon(j, n, 0.75, a)
                np.testing.assert_allclose(td.upsilon_difference(j, n, 0.75, a), direct, atol=1e-10)
    with pytest.raises(DomainError):
        td.upsilon_difference(9, 10, 0.75, 1.0)


def test_upsilon_difference_is_order_eps():
    """sup_j ||Upsilon_{j+1} - Upsilon_j|| / eps_j stays bounded as n grows."""
    kappas = []
    for n in (100, 1000, 4000):
        U = td.upsilon_all(n, 0.75, 1.0)[:, 0, 0]
        kappas.append(np.max(np.abs(np.diff(U)) / td.step_sizes(n - 1, 0.75)))
    assert max(kappas) <= 1.5 * kappas[0]


def test_upsilon_decay_sweep():
    rep = td.upsilon_decay_curve([200, 2000, 20000], 0.7, 1.0)
    assert abs(rep.slope + 0.3) <= 0.15
    sups = [td.upsilon_norms(t, 0.7, 1.0).max() for t in (200, 2000, 20000)]
    assert max(sups) <= 1.1 * sups[0]
    slopes = [td.upsilon_decay_curve([200, 2000, 20000], d, 1.0).slope for d in (0.6, 0.75, 0.9)]
    assert abs(slopes[0]) > abs(slopes[1]) > abs(slopes[2])


def test_delta_moments_noise_free():
    model = noise_free_model([[0.5]], [-0.5])
    rep = td.delta_moment_curve(model, [10, 100, 1000], replicates=4, seed=0)
    eps = td.step_sizes(1000, 0.75)
    prod = np.cumprod(1 - 0.5 * eps)
    np.testing.assert_allclose(rep.values, [prod[k - 1] ** 2 for k in (10, 100, 1000)], rtol=1e-9)
    np.testing.assert_allclose(rep.stderrs, 0, atol=1e-15)


def test_delta_moments_noisy_basic(scalar_td_model):
    rep = td.delta_moment_curve(scalar_td_model, [100, 1000], replicates=50, seed=1)
    assert np.all(rep.values >= 0) and np.all(np.isfinite(rep.stderrs))

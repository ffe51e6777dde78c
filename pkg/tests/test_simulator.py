import numpy as np
import pytest

from skds.errors import Diverged, NotStable
from skds.models import DiffusionBasis, linear_model
from skds.simulator import (
    SimConfig,
    euler_maruyama_sample,
    lyapunov_solve,
    ou_exact_sample,
    ou_model,
)


def _stable(rng, d):
    """Random diagonally dominant Hurwitz matrix."""
    M = rng.uniform(-0.5, 0.5, size=(d, d))
    np.fill_diagonal(M, 0)
    np.fill_diagonal(M, -(np.abs(M).sum(axis=1) + rng.uniform(0.5, 1.5, size=d)))
    return M


def test_zero_dynamics_stay_at_zero():
    m = linear_model(
        2,
        diffusion="basis_cone",
        diffusion_basis=DiffusionBasis(np.zeros((0, 2))),
        fix_self_loops=False,
    )
    ds = euler_maruyama_sample(m, None, SimConfig(burn_in_steps=50, n_samples=20))
    assert np.all(ds.X == 0)


def test_example_ou_moments():
    m = linear_model(1, B=[[4.0, -4.0]], s=[np.log(2.0)], fix_self_loops=False)
    X = euler_maruyama_sample(m, None, SimConfig(n_samples=20000, seed=1)).X
    assert abs(X.mean() - 1.0) <= 0.05
    assert abs(X.var() - 0.5) <= 0.05


def test_unstable_drift_diverges():
    m = linear_model(1, B=[[0.0, 1.0]], fix_self_loops=False)
    with pytest.raises(Diverged) as e:
        euler_maruyama_sample(m, None, SimConfig(burn_in_steps=100000, n_samples=10))
    assert e.value.step > 0


def test_determinism_and_chains():
    m = linear_model(2, B=[[0.5, -1.0, 0.2], [0.0, 0.3, -1.0]])
    cfg = SimConfig(burn_in_steps=200, n_samples=400, seed=3)
    a = euler_maruyama_sample(m, None, cfg).X
    b = euler_maruyama_sample(m, None, cfg).X
    assert np.array_equal(a, b)
    c = euler_maruyama_sample(m, None, SimConfig(burn_in_steps=200, n_samples=400, seed=3, chains=4)).X
    assert c.shape == a.shape


def test_disjoint_seeds_agree_in_mean():
    m = linear_model(2, B=[[0.5, -1.0, 0.2], [0.0, 0.3, -1.0]])
    # thin by several relaxation times so draws are close to independent
    cfg = dict(n_samples=1000, burn_in_steps=1000, thinning=400)
    a = euler_maruyama_sample(m, None, SimConfig(seed=1, **cfg)).X
    b = euler_maruyama_sample(m, None, SimConfig(seed=2, **cfg)).X
    se = np.sqrt(a.var(0) / len(a) + b.var(0) / len(b))
    assert np.all(np.abs(a.mean(0) - b.mean(0)) <= 4 * se)


def test_lyapunov_examples():
    assert lyapunov_solve([[-4.0]], [[4.0]]) == pytest.approx(np.array([[0.5]]))
    assert np.allclose(lyapunov_solve(-np.eye(3), 2 * np.eye(3)), np.eye(3))


def test_lyapunov_residual_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = int(rng.integers(1, 6))
        M = _stable(rng, d)
        D = rng.normal(size=(d, d))
        Q = D @ D.T
        S = lyapunov_solve(M, Q)
        assert np.max(np.abs(M @ S + S @ M.T + Q)) <= 1e-8


def test_lyapunov_not_stable():
    with pytest.raises(NotStable):
        lyapunov_solve([[1.0]], [[1.0]])
    with pytest.raises(NotStable):
        lyapunov_solve([[0.0, 1.0], [-1.0, 0.0]], np.eye(2))


def test_ou_exact_examples():
    ds = ou_exact_sample([[-1.0]], [2.0], [[0.0]], 10)
    assert np.all(ds.X == 2.0)
    X = ou_exact_sample([[-4.0]], [0.0], [[4.0]], 50000, seed=1).X
    assert abs(X.var() - 0.5) <= 0.01


def test_ou_exact_covariance():
    rng = np.random.default_rng(1)
    M = _stable(rng, 3)
    D = rng.normal(size=(3, 3))
    Q = D @ D.T
    S = lyapunov_solve(M, Q)
    X = ou_exact_sample(M, np.zeros(3), Q, 50000, seed=2).X
    assert np.linalg.norm(np.cov(X.T) - S) / np.linalg.norm(S) <= 0.05


def test_em_matches_exact_ou():
    rng = np.random.default_rng(2)
    d = 3
    M = _stable(rng, d)
    D = np.diag(rng.uniform(0.5, 1.5, size=d))
    mean = rng.normal(size=d)
    model = ou_model(M, D, mean)
    cfg = SimConfig(dt=0.005, burn_in_steps=20000, n_samples=20000, seed=4)
    X = euler_maruyama_sample(model, None, cfg).X
    S = lyapunov_solve(M, D @ D.T)
    assert np.max(np.abs(X.mean(0) - mean)) <= 0.05
    assert np.linalg.norm(np.cov(X.T) - S) / np.linalg.norm(S) <= 0.1


def test_config_validation():
    from skds.errors import SkdsError

    for bad in ({"dt": 0.0}, {"n_samples": 0}, {"thinning": 0}, {"chains": 0}):
        with pytest.raises(SkdsError):
            SimConfig(**bad)

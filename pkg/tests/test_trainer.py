import numpy as np
import pytest

from skds.dataset import Dataset
from skds.discrepancy import build_R_hat, skds_grad, skds_quadratic
from skds.errors import ConfigError, InvalidInput
from skds.kernels import KernelSpec
from skds.models import DiffusionBasis, FeatureBasis, Intervention, linear_model, mlp_model
from skds.simulator import SimConfig, euler_maruyama_sample
from skds.trainer import (
    Adam,
    FitResult,
    TrainConfig,
    calibrate_test_intervention,
    regularizer,
    stationary_mean_linear,
    train,
)


def _ou_data(n=5000, seed=0):
    return np.random.default_rng(seed).normal(1.0, np.sqrt(0.5), size=(n, 1))


def test_zero_steps_returns_init():
    m = linear_model(2, B=np.arange(6.0).reshape(2, 3))
    X = np.random.default_rng(0).normal(size=(20, 2))
    fit = train([X], m, TrainConfig(steps=0))
    for k in m.params:
        assert np.array_equal(fit.model.params[k], m.params[k])
    assert fit.loss_trace.size == 0


def test_one_dimensional_fit_reaches_stationary_profile():
    """Default optimizer settings; the final partials sit at Adam's jitter
    level (about 0.05 in magnitude across seeds), so the 0.05 bound is marginal."""
    X = _ou_data()
    ker = KernelSpec("rbf", 0.5, 1)
    fit = train([X], linear_model(1), TrainConfig(steps=3000, lr=0.01, lambda_sparsity=0.0, seed=1), ker)
    m = fit.model
    # frozen self-weight -1 removes the speed ambiguity: b(x) = c - x, a = exp(2s)
    assert m.params["B"][0, 1] == -1.0
    c, s = m.params["B"][0, 0], m.params["s"][0]
    assert c == pytest.approx(1.0, abs=0.1)  # stationary mean c
    assert np.exp(2 * s) == pytest.approx(1.0, abs=0.15)  # variance a / 2 = 0.5
    g = skds_grad(m, None, ker, X, "u_statistic").grad_theta
    assert abs(g["B"][0, 0]) < 0.05 and abs(g["s"][0]) < 0.05


def test_loss_trace_descends_on_convex_instance():
    X = _ou_data(2000, seed=2)
    ker = KernelSpec("rbf", 0.5, 1)
    init = linear_model(1, B=[[-2.0, -1.0]], s=[1.0])
    fit = train([X, X], init, TrainConfig(steps=1500, lambda_sparsity=0.0, seed=3), ker)
    blocks = fit.loss_trace.reshape(-1, 100).mean(axis=1)
    sd = fit.loss_trace[-300:].std()
    # block means never rise by more than three standard errors of a
    # difference of two independent block means at the noise floor
    assert np.all(np.diff(blocks) <= 3 * np.sqrt(2) * sd / np.sqrt(100))
    assert blocks[-1] < blocks[0]


def test_regularizer_examples():
    m = linear_model(2)
    v, g, _ = regularizer(m)
    assert v == 0
    m.params["B"][0, 2] = -2.0  # weight of x_2 in coordinate 0
    v, g, _ = regularizer(m)
    assert v == 2.0
    assert g["B"][0, 2] == -1.0
    assert np.count_nonzero(g["B"]) == 1
    # intervention shifts are penalized too
    v, _, gp = regularizer(m, [Intervention((1,), [0.5])])
    assert v == 2.5 and gp[0]["delta"][0] == 1.0


def test_regularizer_mlp_group():
    m = mlp_model(3, hidden=4, seed=0)
    U = m.params["U"]
    ref = sum(np.linalg.norm(U[j, :, i]) for j in range(3) for i in range(3) if i != j)
    v, g, _ = regularizer(m)
    assert v == pytest.approx(ref)
    m.params["U"][:] = 0
    assert regularizer(m)[0] == 0


def test_only_sampled_environment_phi_changes():
    rng = np.random.default_rng(4)
    envs = [rng.normal(size=(40, 3))] + [
        Dataset(rng.normal(size=(40, 3)) + 1, env=f"e{t}", targets=(t,)) for t in range(3)
    ]
    cfg = dict(lambda_sparsity=0.01, batch_size=10, seed=5)
    prev = train(envs, linear_model(3), TrainConfig(steps=0, **cfg))
    for k in range(1, 12):
        cur = train(envs, linear_model(3), TrainConfig(steps=k, **cfg))
        changed = [
            i
            for i, (a, b) in enumerate(zip(prev.phis, cur.phis))
            if not (np.array_equal(a.delta, b.delta) and np.array_equal(a.log_beta, b.log_beta))
        ]
        assert len(changed) <= 1
        assert 0 not in changed
        assert cur.phis[0].is_identity
        prev = cur


def test_loss_equals_quadratic_form_without_penalty():
    rng = np.random.default_rng(6)
    d = 2
    X = rng.normal(size=(24, d))
    ker = KernelSpec("rbf", 1.0, d)
    V = DiffusionBasis(np.eye(d))
    init = linear_model(d, diffusion="basis_cone", diffusion_basis=V)
    q = build_R_hat(FeatureBasis.affine(d), V, ker, X, "u_statistic")
    cfg = dict(lambda_sparsity=0.0, batch_size=64, estimator="u_statistic", seed=7)
    full = train([X], init, TrainConfig(steps=6, **cfg), ker)
    for t in range(6):
        m = train([X], init, TrainConfig(steps=t, **cfg), ker).model
        theta = np.concatenate([m.params["B"].ravel(), m.params["A"]])
        ref = skds_quadratic(q, theta)
        assert abs(full.loss_trace[t] - ref) <= 1e-10 * max(1.0, abs(ref))


def test_determinism():
    X = np.random.default_rng(8).normal(size=(50, 2))
    cfg = TrainConfig(steps=30, batch_size=16, seed=9)
    a = train([X], mlp_model(2, hidden=3), cfg)
    b = train([X], mlp_model(2, hidden=3), cfg)
    assert np.array_equal(a.loss_trace, b.loss_trace)


def test_cone_projection_every_step():
    X = np.random.default_rng(10).normal(scale=0.1, size=(30, 2))
    init = linear_model(2, diffusion="basis_cone", A=[0.01, 0.01])
    for k in range(1, 30, 7):
        fit = train([X], init, TrainConfig(steps=k, lr=0.5, batch_size=8, seed=11))
        assert np.all(fit.model.params["A"] >= 0)
        assert np.all(fit.model.params["B"][fit.model.frozen["B"]] == -1.0)


def test_mlp_frozen_columns_survive_training():
    X = np.random.default_rng(12).normal(size=(40, 3))
    fit = train([X], mlp_model(3, hidden=4), TrainConfig(steps=20, lr=0.1, batch_size=10))
    idx = np.arange(3)
    assert np.all(fit.model.params["U"][idx, :, idx] == 0)


def test_fit_result_round_trip():
    X = np.random.default_rng(13).normal(size=(20, 2))
    fit = train([X, (X + 1, (0,))], linear_model(2), TrainConfig(steps=5, batch_size=4))
    back = FitResult.from_dict(fit.to_dict())
    assert np.array_equal(back.loss_trace, fit.loss_trace)
    assert np.array_equal(back.model.params["B"], fit.model.params["B"])
    assert back.phis[1].targets == (0,)


def test_adam_matches_hand_update():
    opt = Adam({"x": np.array([1.0])}, lr=0.1)
    p = opt.step({"x": np.array([1.0])}, {"x": np.array([2.0])})
    # first bias-corrected step has magnitude lr
    assert p["x"][0] == pytest.approx(0.9, abs=1e-7)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lr=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1)
    with pytest.raises(InvalidInput):
        train([np.zeros((10, 3))], linear_model(2))


# ---------------------------------------------------------------------------
# calibration


def test_closed_form_calibration_example():
    alpha = 0.7
    m = linear_model(1, B=[[4 * alpha, -4.0]], fix_self_loops=False)
    for desired in (-1.0, 0.7, 2.5):
        phi = calibrate_test_intervention(m, 0, desired)
        assert phi.delta[0] == pytest.approx(4 * (desired - alpha), abs=1e-12)
    assert calibrate_test_intervention(m, 0, alpha).delta[0] == pytest.approx(0.0, abs=1e-12)
    assert stationary_mean_linear(m)[0] == pytest.approx(alpha)


def test_closed_form_multivariate():
    m = linear_model(3, B=[[0.2, -1.0, 0.4, 0.0], [0.0, 0.3, -1.0, 0.1], [1.0, 0.0, 0.5, -1.0]])
    phi = calibrate_test_intervention(m, 2, 1.5)
    assert stationary_mean_linear(m, phi)[2] == pytest.approx(1.5, abs=1e-12)


def test_secant_calibration_mlp():
    rng = np.random.default_rng(14)
    sim = SimConfig(burn_in_steps=2000, n_samples=2000, thinning=5)
    for i in range(20):
        m = mlp_model(3, hidden=4, seed=int(rng.integers(1 << 30)))
        m.params["bias"] = rng.normal(scale=0.5, size=3)
        t = int(rng.integers(3))
        desired = float(rng.uniform(-1.5, 1.5))
        phi = calibrate_test_intervention(m, t, desired, sim, tol=0.02, max_iter=12)
        got = euler_maruyama_sample(m, phi, sim).X[:, t].mean()
        assert abs(got - desired) <= 0.02


def test_calibration_validation():
    m = linear_model(2)
    with pytest.raises(InvalidInput):
        calibrate_test_intervention(m, 5, 0.0)
    with pytest.raises(InvalidInput):
        calibrate_test_intervention(m, 0, np.nan)
    with pytest.raises(InvalidInput):
        calibrate_test_intervention(mlp_model(2), 0, 0.0, method="closed_form")

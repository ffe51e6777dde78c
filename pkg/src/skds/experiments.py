"""Scripted experiments shared by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from skds.datagen import BenchmarkBundle, make_benchmark
from skds.discrepancy import build_R_hat, skds_quadratic, standard_error
from skds.kernels import KernelSpec
from skds.metrics import metric_report
from skds.models import DiffusionBasis, FeatureBasis, linear_model, make_model
from skds.simulator import SimConfig, euler_maruyama_sample
from skds.trainer import TrainConfig, calibrate_test_intervention, train

# ---------------------------------------------------------------------------
# one-dimensional OU example


@dataclass
class Fig1Result:
    alphas: np.ndarray
    sigmas: np.ndarray
    grid: np.ndarray  # (len(alphas), len(sigmas)) loss values
    d_alpha: np.ndarray  # along alphas at sigma = true_sigma
    d_sigma: np.ndarray  # along sigmas at alpha = true_alpha
    loss_at_truth: float
    se_at_truth: float
    alpha_crossings: np.ndarray
    sigma_crossings: np.ndarray
    true_alpha: float
    true_sigma: float
    speed: float


def _crossings(x, y):
    """Linear-interpolated zero crossings of a sampled curve."""
    idx = np.where(np.sign(y[:-1]) * np.sign(y[1:]) <= 0)[0]
    out = []
    for i in idx:
        if y[i] == y[i + 1]:
            out.append(x[i])
        else:
            out.append(x[i] - y[i] * (x[i + 1] - x[i]) / (y[i + 1] - y[i]))
    return np.unique(np.round(out, 12))


def example_fig1(
    n: int = 5000,
    bandwidth: float = 0.5,
    seed: int = 0,
    estimator: str = "u_statistic",
    alphas=None,
    sigmas=None,
    speed: float = 4.0,
    true_alpha: float = 1.0,
    true_sigma: float = 2.0,
) -> Fig1Result:
    """Loss surface and partial derivatives for ``dX = -speed (X - alpha) dt + sigma dB``.

    Data are exact draws from the stationary law ``N(true_alpha, true_sigma^2 / (2 speed))``.
    The model is linear in ``theta = (speed * alpha, -speed, sigma^2)``, so one
    quadratic form evaluates the whole grid exactly.
    """
    alphas = np.linspace(0.0, 2.0, 81) if alphas is None else np.asarray(alphas, float)
    sigmas = np.linspace(0.5, 3.0, 101) if sigmas is None else np.asarray(sigmas, float)
    var = true_sigma**2 / (2 * speed)
    X = np.random.default_rng(seed).normal(true_alpha, np.sqrt(var), size=(n, 1))
    kernel = KernelSpec("rbf", bandwidth, 1)
    q = build_R_hat(FeatureBasis.affine(1), DiffusionBasis.units(1), kernel, X, estimator)
    R = q.R_hat

    def theta(a, s):
        return np.array([speed * a, -speed, s * s])

    grid = np.array([[skds_quadratic(q, theta(a, s)) for s in sigmas] for a in alphas])
    d_alpha = np.array([2 * R[0] @ theta(a, true_sigma) * speed for a in alphas])
    d_sigma = np.array([2 * R[2] @ theta(true_alpha, s) * 2 * s for s in sigmas])
    truth = q.model(theta(true_alpha, true_sigma))
    return Fig1Result(
        alphas,
        sigmas,
        grid,
        d_alpha,
        d_sigma,
        skds_quadratic(q, theta(true_alpha, true_sigma)),
        standard_error(truth, None, kernel, X, estimator),
        _crossings(alphas, d_alpha),
        _crossings(sigmas, d_sigma),
        true_alpha,
        true_sigma,
        speed,
    )


def fig1_rows(res: Fig1Result):
    """Long-format rows ``(panel, alpha, sigma, x, value)`` for plotting."""
    rows = []
    xs = np.linspace(-1.0, 3.0, 201)
    models = {
        "truth": (res.true_alpha, res.true_sigma),
        "alt_shifted_mean": (0.25, res.true_sigma),
        "alt_small_noise": (res.true_alpha, 1.0),
    }
    for name, (a, s) in models.items():
        v = s * s / (2 * res.speed)
        pdf = np.exp(-((xs - a) ** 2) / (2 * v)) / np.sqrt(2 * np.pi * v)
        rows += [(f"pdf_{name}", a, s, x, p) for x, p in zip(xs, pdf)]
    for i, a in enumerate(res.alphas):
        for j, s in enumerate(res.sigmas):
            rows.append(("loss", a, s, "", res.grid[i, j]))
    rows += [("d_alpha", a, res.true_sigma, "", g) for a, g in zip(res.alphas, res.d_alpha)]
    rows += [("d_sigma", res.true_alpha, s, "", g) for s, g in zip(res.sigmas, res.d_sigma)]
    return rows


# ---------------------------------------------------------------------------
# held-out intervention evaluation


def evaluate_fit(model, bundle: BenchmarkBundle, sim_cfg: SimConfig, seed: int = 0):
    """Calibrate each test intervention to its observed target mean, simulate, and score."""
    out = []
    for k, env in enumerate(bundle.test_envs):
        t = env.intervention.targets[0]
        phi = calibrate_test_intervention(model, t, float(env.data.X[:, t].mean()), sim_cfg)
        cfg = SimConfig(**{**sim_cfg.to_dict(), "n_samples": env.data.n, "seed": seed + k})
        S = euler_maruyama_sample(model, phi, cfg).X
        rep = metric_report(S, env.data.X, seed=seed + k)
        out.append(
            {
                "env": env.name,
                "target": int(t),
                "delta": float(phi.delta[0]),
                "w2": rep.w2,
                "mean_mse": rep.mean_mse,
                "method": rep.method,
                "n": rep.n_b,
            }
        )
    return out


def recovery_experiment(
    n_bundles: int = 5,
    d: int = 5,
    n_train_env: int = 3,
    n_test_env: int = 2,
    n_per_env: int = 1000,
    steps: int = 5000,
    seed: int = 0,
    model_kind: str = "linear",
    train_cfg: TrainConfig | None = None,
    sim_cfg: SimConfig | None = None,
):
    """Train on generated SDE bundles and score trained vs. untrained models on test envs."""
    sim_cfg = SimConfig() if sim_cfg is None else sim_cfg
    trained, untrained = [], []
    for b in range(n_bundles):
        s = seed + b
        bundle = make_benchmark("sde", "er", d, n_per_env, n_train_env, n_test_env, 2.0, s)
        init = linear_model(d) if model_kind == "linear" else make_model(model_kind, d, seed=s)
        cfg = train_cfg or TrainConfig(steps=steps, seed=s)
        cfg = TrainConfig(**{**cfg.to_dict(), "steps": steps, "seed": s})
        envs = [bundle.observational] + [e.data for e in bundle.train_envs]
        fit = train(envs, init, cfg)
        trained += evaluate_fit(fit.model, bundle, sim_cfg, seed=s)
        untrained += evaluate_fit(init, bundle, sim_cfg, seed=s)
    return trained, untrained

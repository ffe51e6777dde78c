"""Stochastic-gradient fitting of an SDE model and per-environment interventions."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from skds.dataset import Dataset
from skds.discrepancy import _estimator, skds_grad
from skds.errors import ConfigError, InsufficientData, InvalidInput, NoConvergence, NonFiniteLoss, NotStable
from skds.kernels import KernelSpec, make_kernel
from skds.models import FeatureBasis, Intervention, SdeModel
from skds.simulator import SimConfig, euler_maruyama_sample


@dataclass
class TrainConfig:
    steps: int = 1000
    batch_size: int = 256
    lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_sparsity: float = 0.001
    estimator: str = "linear_pairs"
    kernel: str = "rbf"
    bandwidth: float | str = "median"
    seed: int = 0
    grad_clip: float | None = 10.0

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.lambda_sparsity < 0:
            raise ConfigError("lambda_sparsity must be >= 0")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError("grad_clip must be positive or None")
        try:
            self.estimator = _estimator(self.estimator)
        except InvalidInput as e:
            raise ConfigError(str(e)) from None

    def to_dict(self):
        return asdict(self)


@dataclass
class FitResult:
    model: SdeModel
    phis: list
    loss_trace: np.ndarray
    kernel: KernelSpec
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "phis": [p.to_dict() for p in self.phis],
            "loss_trace": self.loss_trace.tolist(),
            "kernel": self.kernel.to_dict(),
            "config": self.config,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d):
        k = d["kernel"]
        return cls(
            SdeModel.from_dict(d["model"]),
            [Intervention.from_dict(p) for p in d["phis"]],
            np.asarray(d["loss_trace"], dtype=float),
            KernelSpec(k["family"], k["bandwidth"], k["dim"]),
            d.get("config", {}),
            d.get("wall_time", 0.0),
        )


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam over a dict of arrays; one instance per parameter group."""

    def __init__(self, params: dict, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        out = {}
        for k, p in params.items():
            g = grads.get(k)
            if g is None:
                out[k] = p
                continue
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            out[k] = p - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return out


def _clip(groups, max_norm):
    if max_norm is None:
        return groups
    sq = sum(float(np.sum(g * g)) for grads in groups for g in grads.values())
    norm = np.sqrt(sq)
    if norm <= max_norm:
        return groups
    s = max_norm / norm
    return [{k: g * s for k, g in grads.items()} for grads in groups]


# ---------------------------------------------------------------------------
# regularizer


def _cross_feature_mask(model: SdeModel):
    """Entries of ``B`` whose feature depends on some variable other than the row's own."""
    mask = np.zeros((model.d, len(model.features)), dtype=bool)
    for n, f in enumerate(model.features.entries):
        for j in range(model.d):
            if f.kind == "const":
                continue
            if f.kind == "coord":
                mask[j, n] = f.i != j
            elif f.kind == "mono":
                mask[j, n] = not (f.i == j and f.j == j)
            else:
                w = np.asarray(f.w)
                mask[j, n] = bool(np.any(np.delete(w, j) != 0))
    return mask


def regularizer(model: SdeModel, phis=()):
    """Sparsity penalty and its subgradient (zero at exact zeros).

    Linear drift: L1 on cross-variable weights. MLP drift: group L2 over the
    input columns ``U_j[:, i]``, ``i != j``. Intervention shifts: L1.
    Returns ``(value, grad_theta, grad_phis)``.
    """
    g = {k: np.zeros_like(v) for k, v in model.params.items()}
    value = 0.0
    if model.kind == "linear":
        mask = _cross_feature_mask(model)
        B = model.params["B"]
        value += float(np.abs(B[mask]).sum())
        g["B"] = np.where(mask, np.sign(B), 0.0)
    else:
        U = model.params["U"]  # (d, h, d)
        norms = np.sqrt(np.sum(U * U, axis=1))  # (d, d): norm of column i of U_j
        off = ~np.eye(model.d, dtype=bool)
        value += float(norms[off].sum())
        safe = np.where(norms > 0, norms, 1.0)
        scale = np.where(off & (norms > 0), 1.0 / safe, 0.0)
        g["U"] = U * scale[:, None, :]
    gphis = []
    for p in phis:
        value += float(np.abs(p.delta).sum())
        gphis.append({"delta": np.sign(p.delta), "log_beta": np.zeros_like(p.log_beta)})
    return value, g, gphis


# ---------------------------------------------------------------------------
# training


def _env_data(e):
    if isinstance(e, Dataset):
        return e.X, e.targets
    if isinstance(e, tuple):
        X, t = e
        return np.asarray(getattr(X, "X", X), dtype=float), tuple(t)
    return np.asarray(e, dtype=float), ()


class _Batcher:
    """Per-environment epochs: a fresh permutation is consumed without replacement."""

    def __init__(self, n, size, rng):
        self.n, self.size, self.rng = n, size, rng
        self.perm = None
        self.pos = n

    def next(self):
        if self.size >= self.n:
            return self.rng.permutation(self.n)
        if self.pos + self.size > self.n:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.perm[self.pos : self.pos + self.size]
        self.pos += self.size
        return idx


def train(envs, model: SdeModel, cfg: TrainConfig | None = None, kernel: KernelSpec | None = None) -> FitResult:
    """Fit ``model`` (in place on a copy) to a list of environments.

    ``envs[0]`` is observational and keeps the identity intervention; each other
    entry is a :class:`Dataset` (or ``(X, targets)``) whose targets are known.
    Each step samples one environment uniformly, draws a batch without
    replacement, and applies Adam to the model parameters and that
    environment's ``(delta, log_beta)``.
    """
    cfg = TrainConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    data = [_env_data(e) for e in envs]
    if not data:
        raise InsufficientData("no environments")
    for X, _ in data:
        if X.ndim != 2 or X.shape[1] != model.d:
            raise InvalidInput(f"environment data must have shape (N, {model.d})")
        if X.shape[0] < 2:
            raise InsufficientData("every environment needs at least 2 samples")
    if kernel is None:
        kernel = make_kernel(cfg.kernel, cfg.bandwidth, model.d, data[0][0])
    model = model.copy()
    frozen_vals = {k: model.params[k][m].copy() for k, m in model.frozen.items()}
    phis = [Intervention.identity()] + [
        Intervention(t, np.zeros(len(t)), np.zeros(len(t))) for _, t in data[1:]
    ]
    phis[0] = Intervention.identity()
    rng = np.random.default_rng(cfg.seed)
    batchers = [_Batcher(X.shape[0], cfg.batch_size, rng) for X, _ in data]
    opt_theta = Adam(model.params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    opt_phi = [Adam(p.params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) for p in phis]
    trace = np.empty(cfg.steps)
    lam = cfg.lambda_sparsity
    for step in range(cfg.steps):
        i = int(rng.integers(len(data)))
        X = data[i][0][batchers[i].next()]
        lg = skds_grad(model, phis[i], kernel, X, cfg.estimator)
        g_theta, g_phi = lg.grad_theta, lg.grad_phi
        loss = lg.loss
        if lam > 0:
            r, rg, rphi = regularizer(model, [phis[i]])
            loss += lam * r
            g_theta = {k: g_theta[k] + lam * rg[k] for k in g_theta}
            g_phi = {k: g_phi[k] + lam * rphi[0][k] for k in g_phi}
        if not np.isfinite(loss):
            raise NonFiniteLoss(step)
        trace[step] = loss
        if i == 0:
            (g_theta,) = _clip([g_theta], cfg.grad_clip)
        else:
            g_theta, g_phi = _clip([g_theta, g_phi], cfg.grad_clip)
        model.params = opt_theta.step(model.params, g_theta)
        for k, m in model.frozen.items():
            model.params[k][m] = frozen_vals[k]
        model.project()
        if i > 0 and phis[i].targets:
            phis[i] = phis[i].with_params(opt_phi[i].step(phis[i].params(), g_phi))
    return FitResult(
        model, phis, trace, kernel, {"train": cfg.to_dict(), "kernel": kernel.to_dict()},
        time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# test-time calibration


def _affine_drift(model):
    if model.kind != "linear" or model.features != FeatureBasis.affine(model.d):
        return None
    B = model.params["B"]
    return B[:, 0], B[:, 1:]


def stationary_mean_linear(model: SdeModel, phi: Intervention | None = None):
    """Fixed point of an affine drift ``c + W x``; raises NotStable for non-Hurwitz ``W``."""
    cw = _affine_drift(model)
    if cw is None:
        raise InvalidInput("closed-form stationary mean needs a linear model with affine features")
    c, W = cw
    if np.max(np.linalg.eigvals(W).real) >= 0:
        raise NotStable("linear drift is not Hurwitz; no stationary mean")
    if phi is not None:
        c = c + phi.shift_vector(model.d)
    return np.linalg.solve(W, -c)


def calibrate_test_intervention(
    model: SdeModel,
    target: int,
    desired_mean: float,
    sim_cfg: SimConfig | None = None,
    tol: float = 0.02,
    max_iter: int = 12,
    method: str = "auto",
) -> Intervention:
    """Shift on ``target`` so that the stationary mean of that coordinate hits ``desired_mean``.

    Linear models with affine features use the exact response of the fixed
    point; otherwise a secant iteration on simulated means is run with common
    random numbers across iterations.
    """
    if not np.isfinite(desired_mean):
        raise InvalidInput("desired_mean must be finite")
    if not 0 <= target < model.d:
        raise InvalidInput(f"target {target} outside [0, {model.d})")
    if method not in ("auto", "closed_form", "simulate"):
        raise InvalidInput(f"unknown calibration method {method!r}")
    if method != "simulate" and _affine_drift(model) is not None:
        c, W = _affine_drift(model)
        mu0 = stationary_mean_linear(model)[target]
        e = np.zeros(model.d)
        e[target] = 1.0
        slope = -np.linalg.solve(W, e)[target]  # d mu_t / d delta
        if slope == 0:
            raise NoConvergence(0.0, abs(desired_mean - mu0), "target mean does not respond to shifts")
        return Intervention((target,), [(desired_mean - mu0) / slope])
    if method == "closed_form":
        raise InvalidInput("closed-form calibration needs a linear model with affine features")

    sim_cfg = SimConfig() if sim_cfg is None else sim_cfg

    def resid(delta):
        phi = Intervention((target,), [delta])
        return float(euler_maruyama_sample(model, phi, sim_cfg).X[:, target].mean()) - desired_mean

    d0, f0 = 0.0, resid(0.0)
    best = (abs(f0), d0)
    if abs(f0) <= tol:
        return Intervention((target,), [d0])
    d1 = -f0  # the -x skip term gives unit-order mean response
    for _ in range(max_iter - 1):
        f1 = resid(d1)
        best = min(best, (abs(f1), d1))
        if abs(f1) <= tol:
            return Intervention((target,), [d1])
        if f1 == f0:
            break
        d0, f0, d1 = d1, f1, d1 - f1 * (d1 - d0) / (f1 - f0)
    raise NoConvergence(best[1], best[0])

"""Stationary sampling: Euler-Maruyama rollouts and exact Ornstein-Uhlenbeck draws."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from skds.dataset import Dataset
from skds.errors import ConfigError, Diverged, InvalidInput, NotStable
from skds.models import (
    FeatureBasis,
    Intervention,
    SdeModel,
    diffusion_sigma_eval,
    drift_eval,
    linear_model,
)

NOISE_BLOCK = 1024  # steps of Gaussian increments drawn per generator call
_MASK64 = (1 << 64) - 1


@dataclass
class SimConfig:
    dt: float = 0.01
    burn_in_steps: int = 5000
    thinning: int = 10
    n_samples: int = 1000
    seed: int = 0
    init: str = "zeros"  # "zeros" or "gaussian"
    init_scale: float = 1.0
    divergence_threshold: float = 1e6
    chains: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if self.burn_in_steps < 0 or self.thinning < 1 or self.n_samples < 1 or self.chains < 1:
            raise ConfigError("burn_in_steps >= 0, thinning >= 1, n_samples >= 1, chains >= 1")
        if self.init not in ("zeros", "gaussian"):
            raise ConfigError(f"unknown init {self.init!r}")
        if not self.divergence_threshold > 0:
            raise ConfigError("divergence_threshold must be positive")

    def to_dict(self):
        return asdict(self)


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Counter-based stream for one chain; increments are consumed in step order."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & _MASK64, int(chain)]))


def _drift_fn(model, phi):
    """Drift closure; affine linear models skip the generic feature stack."""
    if model.kind == "linear" and model.features == FeatureBasis.affine(model.d):
        B = model.params["B"]
        c = B[:, 0] + (0.0 if phi is None else phi.shift_vector(model.d))
        W = B[:, 1:].T.copy()
        return lambda x: x @ W + c
    return lambda x: drift_eval(model, x, phi)


def euler_maruyama_sample(
    model: SdeModel, phi: Intervention | None = None, cfg: SimConfig | None = None
) -> Dataset:
    """``x <- x + b(x) dt + sigma(x) sqrt(dt) xi`` with burn-in and thinning.

    ``cfg.chains`` independent chains advance together (vectorized); chain ``c``
    draws its increments from ``chain_rng(seed, c)`` and contributes a
    contiguous block of rows, ordered by chain index.
    """
    cfg = SimConfig() if cfg is None else cfg
    d = model.d
    C = cfg.chains
    counts = np.full(C, cfg.n_samples // C)
    counts[: cfg.n_samples % C] += 1
    rngs = [chain_rng(cfg.seed, c) for c in range(C)]
    if cfg.init == "zeros":
        x = np.zeros((C, d))
    else:
        x = np.stack([cfg.init_scale * g.standard_normal(d) for g in rngs])
    # both diffusion families are state-independent, so sigma is fixed per run
    sig = diffusion_sigma_eval(model, np.zeros(d), phi)
    drift = _drift_fn(model, phi)
    total = cfg.burn_in_steps + int(counts.max()) * cfg.thinning
    out = np.empty((C, int(counts.max()), d))
    sq = np.sqrt(cfg.dt)
    thr = cfg.divergence_threshold
    noise = None
    step = 0
    while step < total:
        if step % NOISE_BLOCK == 0:
            m = min(NOISE_BLOCK, total - step)
            xi = np.stack([g.standard_normal((m, sig.shape[1])) for g in rngs], axis=1)
            noise = sq * (xi @ sig.T)  # (m, C, d)
        x = x + drift(x) * cfg.dt + noise[step % NOISE_BLOCK]
        step += 1
        if not np.all(np.abs(x) <= thr):
            raise Diverged(step)
        k = step - cfg.burn_in_steps
        if k > 0 and k % cfg.thinning == 0:
            out[:, k // cfg.thinning - 1] = x
    X = np.concatenate([out[c, : counts[c]] for c in range(C)], axis=0)
    targets = () if phi is None else phi.targets
    return Dataset(X, env="simulated", targets=targets, meta={"sim": cfg.to_dict()})


def ou_model(M, D, mean) -> SdeModel:
    """Linear model for ``dX = M (X - mean) dt + D dB`` with diagonal ``D``."""
    M = np.asarray(M, dtype=float)
    D = np.asarray(D, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if D.ndim == 2:
        if np.any(D - np.diag(np.diag(D))):
            raise InvalidInput("ou_model supports diagonal D only")
        D = np.diag(D)
    if np.any(D <= 0):
        raise InvalidInput("diffusion scales must be positive")
    d = M.shape[0]
    B = np.concatenate([(-M @ mean)[:, None], M], axis=1)
    return linear_model(d, B=B, s=np.log(D), fix_self_loops=False)


def lyapunov_solve(M, Q, tol: float = 1e-8) -> np.ndarray:
    """Solve ``M S + S M^T = -Q`` through the ``d^2 x d^2`` Kronecker system.

    Raises NotStable when the system is singular, the residual exceeds
    ``tol * |Q|_F``, or the solution fails to be positive semidefinite (which
    happens for a non-Hurwitz ``M`` with PSD ``Q``).
    """
    M = np.asarray(M, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d = M.shape[0]
    if M.shape != (d, d) or Q.shape != (d, d):
        raise InvalidInput(f"M and Q must be square and equal-sized, got {M.shape}, {Q.shape}")
    if d > 64:
        raise InvalidInput("lyapunov_solve supports d <= 64")
    I = np.eye(d)
    # row-major vec: vec(M S) = (M kron I) vec(S), vec(S M^T) = (I kron M) vec(S)
    K = np.kron(M, I) + np.kron(I, M)
    try:
        S = np.linalg.solve(K, -Q.reshape(-1)).reshape(d, d)
    except np.linalg.LinAlgError:
        raise NotStable("Lyapunov system is singular") from None
    S = 0.5 * (S + S.T)
    res = np.linalg.norm(M @ S + S @ M.T + Q)
    qn = np.linalg.norm(Q)
    if not np.isfinite(res) or res > tol * max(qn, np.finfo(float).tiny):
        raise NotStable(f"Lyapunov residual {res:.3g} exceeds tolerance")
    if qn > 0 and np.linalg.eigvalsh(S)[0] < -1e-10 * max(1.0, np.abs(S).max()):
        raise NotStable("drift matrix is not Hurwitz (stationary covariance is indefinite)")
    return S


def psd_factor(S) -> np.ndarray:
    """``L`` with ``L L^T = S`` from a symmetric eigendecomposition (tolerates singular S)."""
    w, V = np.linalg.eigh(S)
    return V * np.sqrt(np.clip(w, 0.0, None))


def ou_exact_sample(M, mean, Q, n: int, seed: int = 0) -> Dataset:
    """``n`` i.i.d. draws from the OU stationary law ``N(mean, S)``."""
    mean = np.asarray(mean, dtype=float)
    S = lyapunov_solve(M, Q)
    L = psd_factor(S)
    z = np.random.default_rng(seed).standard_normal((n, mean.shape[0]))
    return Dataset(mean + z @ L.T, env="ou_exact")

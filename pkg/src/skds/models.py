"""Parametrized drift and diffusion families with shift-scale interventions.

Parameters live in plain ``dict[str, np.ndarray]`` containers so that gradients,
optimizer state and JSON serialization all share one layout:

* linear drift: ``B`` with shape ``(d, l)``, ``b(x) = B @ j(x)``
* MLP drift: ``bias (d,)``, ``w (d, h)``, ``U (d, h, d)``, ``v (d, h)``,
  ``b_j(x) = bias_j + w_j . sigmoid(U_j x + v_j) - x_j``
* diffusion ``diag_exp``: ``s (d,)`` log-standard deviations, ``a = diag(exp(2 s))``
* diffusion ``basis_cone``: ``A (m,) >= 0``, ``a = sum_i A_i v_i v_i^T``

Evaluation functions accept ``x`` of shape ``(d,)`` or ``(N, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from skds.errors import InvalidInput

# ---------------------------------------------------------------------------
# bases


@dataclass(frozen=True)
class Feature:
    """One scalar feature: ``const``, ``coord`` (x_i), ``mono`` (x_i x_j) or ``tanh``."""

    kind: str
    i: int = -1
    j: int = -1
    w: tuple = ()
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("const", "coord", "mono", "tanh"):
            raise InvalidInput(f"unknown feature kind {self.kind!r}")

    def __call__(self, X):
        if self.kind == "const":
            return np.ones(X.shape[:-1])
        if self.kind == "coord":
            return X[..., self.i]
        if self.kind == "mono":
            return X[..., self.i] * X[..., self.j]
        return np.tanh(X @ np.asarray(self.w, dtype=float) + self.c)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind in ("coord", "mono"):
            out["i"] = self.i
        if self.kind == "mono":
            out["j"] = self.j
        if self.kind == "tanh":
            out["w"] = list(self.w)
            out["c"] = self.c
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d.get("i", -1), d.get("j", -1), tuple(d.get("w", ())), d.get("c", 0.0))


@dataclass(frozen=True)
class FeatureBasis:
    entries: tuple

    def __post_init__(self):
        if len(self.entries) < 1:
            raise InvalidInput("a feature basis needs at least one entry")

    def __len__(self):
        return len(self.entries)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return np.stack([f(X) for f in self.entries], axis=-1)

    @classmethod
    def affine(cls, d: int) -> "FeatureBasis":
        """{1, x_1, ..., x_d}."""
        return cls((Feature("const"),) + tuple(Feature("coord", i) for i in range(d)))

    def coord_index(self, i: int):
        for n, f in enumerate(self.entries):
            if f.kind == "coord" and f.i == i:
                return n
        return None

    def to_list(self):
        return [f.to_dict() for f in self.entries]


@dataclass(frozen=True)
class DiffusionBasis:
    """Constant vector fields ``v_i``; unit fields are stored as ``e_j``.

    ``vectors`` has shape ``(m, d)``; ``m = 0`` is allowed.
    """

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2:
            raise InvalidInput("diffusion basis vectors must have shape (m, d)")
        object.__setattr__(self, "vectors", v)

    def __len__(self):
        return self.vectors.shape[0]

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(self.vectors, X.shape[:-1] + self.vectors.shape)

    @classmethod
    def units(cls, d: int) -> "DiffusionBasis":
        return cls(np.eye(d))

    def outer(self):
        """``(m, d, d)`` stack of ``v_i v_i^T``."""
        v = self.vectors
        return v[:, :, None] * v[:, None, :]


# ---------------------------------------------------------------------------
# interventions


@dataclass
class Intervention:
    """Shift-scale intervention on known target coordinates.

    ``delta`` shifts the drift, ``beta = exp(log_beta)`` scales rows of sigma.
    """

    targets: tuple = ()
    delta: np.ndarray | None = None
    log_beta: np.ndarray | None = None

    def __post_init__(self):
        self.targets = tuple(int(t) for t in self.targets)
        if len(set(self.targets)) != len(self.targets):
            raise InvalidInput("intervention targets must be distinct")
        n = len(self.targets)
        self.delta = np.zeros(n) if self.delta is None else np.asarray(self.delta, float).reshape(n)
        self.log_beta = (
            np.zeros(n) if self.log_beta is None else np.asarray(self.log_beta, float).reshape(n)
        )

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def shift(cls, targets, delta, beta=None):
        targets = tuple(np.atleast_1d(targets).tolist())
        delta = np.broadcast_to(np.asarray(delta, float), (len(targets),)).copy()
        log_beta = None if beta is None else np.log(np.broadcast_to(beta, (len(targets),)))
        return cls(targets, delta, log_beta)

    @property
    def beta(self):
        return np.exp(self.log_beta)

    @property
    def is_identity(self):
        return len(self.targets) == 0

    def check(self, d):
        if any(t < 0 or t >= d for t in self.targets):
            raise InvalidInput(f"intervention targets {self.targets} outside [0, {d})")

    def shift_vector(self, d):
        out = np.zeros(d)
        out[list(self.targets)] = self.delta
        return out

    def scale_vector(self, d):
        out = np.ones(d)
        out[list(self.targets)] = self.beta
        return out

    def params(self):
        return {"delta": self.delta, "log_beta": self.log_beta}

    def with_params(self, p):
        return Intervention(self.targets, p["delta"].copy(), p["log_beta"].copy())

    def copy(self):
        return Intervention(self.targets, self.delta.copy(), self.log_beta.copy())

    def to_dict(self):
        return {
            "targets": list(self.targets),
            "delta": self.delta.tolist(),
            "beta": self.beta.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        beta = d.get("beta")
        log_beta = None if beta is None else np.log(np.asarray(beta, float))
        return cls(tuple(d.get("targets", ())), d.get("delta"), log_beta)


def _phi(phi):
    return Intervention.identity() if phi is None else phi


# ---------------------------------------------------------------------------
# model


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class SdeModel:
    """Drift/diffusion family plus its parameter dict.

    ``frozen`` maps parameter names to boolean masks of entries that never
    change; their values are whatever ``params`` holds at construction.
    """

    d: int
    kind: str
    diffusion: str
    params: dict
    features: FeatureBasis | None = None
    diffusion_basis: DiffusionBasis | None = None
    frozen: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise InvalidInput(f"unknown model kind {self.kind!r}")
        if self.diffusion not in ("diag_exp", "basis_cone"):
            raise InvalidInput(f"unknown diffusion mode {self.diffusion!r}")
        if self.kind == "linear" and self.features is None:
            self.features = FeatureBasis.affine(self.d)
        if self.diffusion == "basis_cone" and self.diffusion_basis is None:
            self.diffusion_basis = DiffusionBasis.units(self.d)
        self.params = {k: np.array(v, dtype=float) for k, v in self.params.items()}

    @property
    def hidden(self):
        return self.params["w"].shape[1] if self.kind == "mlp" else 0

    def theta_keys(self):
        drift = ("B",) if self.kind == "linear" else ("bias", "w", "U", "v")
        diff = ("s",) if self.diffusion == "diag_exp" else ("A",)
        return drift + diff

    def copy(self):
        return SdeModel(
            self.d,
            self.kind,
            self.diffusion,
            {k: v.copy() for k, v in self.params.items()},
            self.features,
            self.diffusion_basis,
            {k: v.copy() for k, v in self.frozen.items()},
        )

    def with_params(self, params):
        m = self.copy()
        m.params = {k: np.array(v, dtype=float) for k, v in params.items()}
        return m

    def project(self):
        """Re-impose frozen values and the cone constraint (in place)."""
        if self.kind == "mlp":
            idx = np.arange(self.d)
            self.params["U"][idx, :, idx] = 0.0
        if self.diffusion == "basis_cone":
            np.maximum(self.params["A"], 0.0, out=self.params["A"])
        return self

    def n_params(self):
        return sum(v.size for v in self.params.values())

    def to_dict(self):
        out = {
            "d": self.d,
            "kind": self.kind,
            "diffusion": self.diffusion,
            "params": {k: v.tolist() for k, v in self.params.items()},
            "frozen": {k: v.astype(int).tolist() for k, v in self.frozen.items()},
        }
        if self.kind == "linear":
            out["features"] = self.features.to_list()
        if self.diffusion == "basis_cone":
            out["diffusion_basis"] = self.diffusion_basis.vectors.tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        features = None
        if "features" in d:
            features = FeatureBasis(tuple(Feature.from_dict(f) for f in d["features"]))
        basis = None
        if "diffusion_basis" in d:
            basis = DiffusionBasis(np.asarray(d["diffusion_basis"], float).reshape(-1, d["d"]))
        frozen = {k: np.asarray(v, dtype=bool) for k, v in d.get("frozen", {}).items()}
        return cls(d["d"], d["kind"], d["diffusion"], d["params"], features, basis, frozen)


def linear_model(
    d: int,
    features: FeatureBasis | None = None,
    diffusion: str = "diag_exp",
    diffusion_basis: DiffusionBasis | None = None,
    B=None,
    s=None,
    A=None,
    fix_self_loops: bool = True,
) -> SdeModel:
    """Linear-in-features drift. With ``fix_self_loops`` the weight of feature
    ``x_j`` in coordinate ``j`` is frozen at -1 (when the basis contains it)."""
    features = FeatureBasis.affine(d) if features is None else features
    l = len(features)
    B = np.zeros((d, l)) if B is None else np.array(B, dtype=float).reshape(d, l)
    mask = np.zeros((d, l), dtype=bool)
    if fix_self_loops:
        for j in range(d):
            n = features.coord_index(j)
            if n is not None:
                mask[j, n] = True
                B[j, n] = -1.0
    params = {"B": B}
    if diffusion == "diag_exp":
        params["s"] = np.zeros(d) if s is None else np.array(s, float).reshape(d)
    else:
        diffusion_basis = DiffusionBasis.units(d) if diffusion_basis is None else diffusion_basis
        m = len(diffusion_basis)
        params["A"] = np.ones(m) if A is None else np.array(A, float).reshape(m)
    frozen = {"B": mask} if mask.any() else {}
    return SdeModel(d, "linear", diffusion, params, features, diffusion_basis, frozen).project()


def mlp_model(
    d: int,
    hidden: int = 8,
    diffusion: str = "diag_exp",
    diffusion_basis: DiffusionBasis | None = None,
    seed: int = 0,
) -> SdeModel:
    """Per-coordinate MLP drift with the ``-x_j`` skip term and ``U_j[:, j] = 0``."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(d)
    params = {
        "bias": np.zeros(d),
        "w": rng.normal(0.0, scale, size=(d, hidden)),
        "U": rng.normal(0.0, scale, size=(d, hidden, d)),
        "v": np.zeros((d, hidden)),
    }
    U_mask = np.zeros((d, hidden, d), dtype=bool)
    U_mask[np.arange(d), :, np.arange(d)] = True
    if diffusion == "diag_exp":
        params["s"] = np.zeros(d)
    else:
        diffusion_basis = DiffusionBasis.units(d) if diffusion_basis is None else diffusion_basis
        params["A"] = np.ones(len(diffusion_basis))
    return SdeModel(d, "mlp", diffusion, params, None, diffusion_basis, {"U": U_mask}).project()


def make_model(kind: str, d: int, hidden: int = 8, diffusion: str = "diag_exp", seed: int = 0):
    if kind == "linear":
        return linear_model(d, diffusion=diffusion)
    if kind == "mlp":
        return mlp_model(d, hidden=hidden, diffusion=diffusion, seed=seed)
    raise InvalidInput(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# evaluation


def _as_batch(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.d or x.ndim > 2:
        raise InvalidInput(f"expected points of dimension {model.d}, got shape {x.shape}")
    return x


def _mlp_hidden(model, X):
    p = model.params
    z = np.einsum("jhk,...k->...jh", p["U"], X) + p["v"]
    return _sigmoid(z)


def drift_eval(model: SdeModel, x, phi: Intervention | None = None):
    X = _as_batch(model, x)
    phi = _phi(phi)
    phi.check(model.d)
    p = model.params
    if model.kind == "linear":
        b = model.features(X) @ p["B"].T
    else:
        b = p["bias"] + np.einsum("jh,...jh->...j", p["w"], _mlp_hidden(model, X)) - X
    if not phi.is_identity:
        b = b + phi.shift_vector(model.d)
    return b


def _base_a(model, X):
    p = model.params
    if model.diffusion == "diag_exp":
        return np.broadcast_to(np.diag(np.exp(2.0 * p["s"])), X.shape[:-1] + (model.d, model.d))
    a = np.einsum("m,mij->ij", p["A"], model.diffusion_basis.outer())
    return np.broadcast_to(a, X.shape[:-1] + a.shape)


def diffusion_a_eval(model: SdeModel, x, phi: Intervention | None = None):
    """``a(x)`` with shape ``(..., d, d)``; may be a read-only broadcast view."""
    X = _as_batch(model, x)
    phi = _phi(phi)
    phi.check(model.d)
    a = _base_a(model, X)
    if not phi.is_identity:
        beta = phi.scale_vector(model.d)
        a = a * beta[:, None] * beta[None, :]
    return a


def diffusion_sigma_eval(model: SdeModel, x, phi: Intervention | None = None):
    """A square-root factor ``sigma`` with ``sigma sigma^T = a``; shape ``(..., d, r)``."""
    X = _as_batch(model, x)
    phi = _phi(phi)
    p = model.params
    if model.diffusion == "diag_exp":
        sig = np.diag(np.exp(p["s"]))
    else:
        sig = model.diffusion_basis.vectors.T * np.sqrt(np.maximum(p["A"], 0.0))
    if not phi.is_identity:
        sig = sig * phi.scale_vector(model.d)[:, None]
    return np.broadcast_to(sig, X.shape[:-1] + sig.shape)


# ---------------------------------------------------------------------------
# vector-Jacobian products


class ParamGrad(NamedTuple):
    theta: dict
    phi: dict


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def _mask_frozen(model, grads):
    for k, m in model.frozen.items():
        if k in grads:
            grads[k] = np.where(m, 0.0, grads[k])
    return grads


def drift_vjp(model: SdeModel, x, phi: Intervention | None, cotangent) -> ParamGrad:
    """Gradient of ``sum <cotangent, b(x)>`` over the batch w.r.t. drift and shift."""
    X = _as_batch(model, x)
    C = np.asarray(cotangent, dtype=float)
    if C.shape != X.shape:
        raise InvalidInput(f"cotangent shape {C.shape} does not match x shape {X.shape}")
    phi = _phi(phi)
    X2 = X.reshape(-1, model.d)
    C2 = C.reshape(-1, model.d)
    p = model.params
    g = {}
    if model.kind == "linear":
        g["B"] = C2.T @ model.features(X2)
    else:
        S = _mlp_hidden(model, X2)  # (N, d, h)
        g["bias"] = C2.sum(axis=0)
        g["w"] = np.einsum("nj,njh->jh", C2, S)
        dz = C2[:, :, None] * p["w"][None] * S * (1.0 - S)
        g["v"] = dz.sum(axis=0)
        g["U"] = np.einsum("njh,nk->jhk", dz, X2)
    g = _mask_frozen(model, g)
    col = C2.sum(axis=0)
    gphi = {"delta": col[list(phi.targets)].copy(), "log_beta": np.zeros(len(phi.targets))}
    return ParamGrad(g, gphi)


def diffusion_vjp(model: SdeModel, x, phi: Intervention | None, cotangent) -> ParamGrad:
    """Gradient of ``sum <cotangent, a(x)>_F`` over the batch w.r.t. ``s``/``A`` and ``log_beta``."""
    X = _as_batch(model, x)
    C = np.asarray(cotangent, dtype=float)
    if C.shape != X.shape[:-1] + (model.d, model.d):
        raise InvalidInput(f"cotangent shape {C.shape} does not match a(x) for x {X.shape}")
    phi = _phi(phi)
    Csum = C.reshape(-1, model.d, model.d).sum(axis=0)
    beta = phi.scale_vector(model.d)
    # <C, D a D> = <D C D, a>
    Cb = Csum * beta[:, None] * beta[None, :]
    p = model.params
    g = {}
    if model.diffusion == "diag_exp":
        g["s"] = 2.0 * np.diag(Cb) * np.exp(2.0 * p["s"])
    else:
        g["A"] = np.einsum("ij,mij->m", Cb, model.diffusion_basis.outer())
    g = _mask_frozen(model, g)
    gphi = {"delta": np.zeros(len(phi.targets)), "log_beta": np.zeros(len(phi.targets))}
    if not phi.is_identity:
        a = _base_a(model, X[..., :1, :] if X.ndim == 2 else X)  # a is x-independent
        a = a.reshape(-1, model.d, model.d)[0]
        # d/dlog(beta_t) of sum_ij C_ij beta_i a_ij beta_j = beta_t (row_t + col_t)
        M = Csum * a
        contrib = (M * beta[None, :]).sum(axis=1) + (M * beta[:, None]).sum(axis=0)
        t = list(phi.targets)
        gphi["log_beta"] = contrib[t] * beta[t]
    return ParamGrad(g, gphi)


def add_grads(a: dict, b: dict):
    return {k: a[k] + b[k] for k in a}

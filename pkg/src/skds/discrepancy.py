"""Stein-type kernel discrepancies between an SDE and a sample.

Two pairwise losses are provided, both for a scalar kernel ``k`` (matrix kernel
``k I``):

* ``skds``: built from the first-order operator
  ``S f = 2 <b, f> + tr(a grad f)``; only needs ``k``, its gradients and the
  mixed Hessian ``H = grad_x grad_y^T k``.
* ``kds``: built from the generator ``L f = <b, grad f> + 1/2 tr(a grad^2 f)``
  applied in both arguments; needs up to fourth kernel derivatives.

Every pair term returns its value together with cotangents with respect to the
four inputs ``b(x), b(y), a(x), a(y)``. Batched diffusion cotangents are only
defined up to their antisymmetric part (``a`` is symmetric); single-pair
results are symmetrized. parameter gradients follow by pushing the
accumulated per-sample cotangents through :func:`skds.models.drift_vjp` and
:func:`skds.models.diffusion_vjp`.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from skds.errors import InsufficientData, InvalidInput
from skds.kernels import KernelSpec, high_order_blocks, kernel_derivatives
from skds.models import (
    DiffusionBasis,
    FeatureBasis,
    Intervention,
    ParamGrad,
    SdeModel,
    diffusion_a_eval,
    diffusion_vjp,
    drift_eval,
    drift_vjp,
)

ESTIMATORS = ("linear_pairs", "u_statistic")
_ALIASES = {"linear": "linear_pairs", "ustat": "u_statistic", "u": "u_statistic"}
PAIR_BUDGET = 1 << 14  # pairs evaluated per vectorized chunk


def _estimator(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in ESTIMATORS:
        raise InvalidInput(f"unknown estimator {name!r}; expected one of {ESTIMATORS}")
    return name


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


# ---------------------------------------------------------------------------
# pair terms


class PairTerm(NamedTuple):
    """Pair value plus cotangents; fields may carry a leading batch axis."""

    value: np.ndarray
    d_bx: np.ndarray
    d_by: np.ndarray
    d_ax: np.ndarray
    d_ay: np.ndarray


def skds_terms(kernel: KernelSpec, x, y, bx, by, ax, ay, cotangents: bool = True) -> PairTerm:
    """Batched SKDS pair value from drift/diffusion values at ``x`` and ``y``."""
    k, gx, gy, H = kernel_derivatives(kernel, x, y)
    ay_gy = _mv(ay, gy)
    ax_gx = _mv(ax, gx)
    axH = ax @ H
    # sum_il (a_x a_y)_il H_il = sum_jl (a_x H)_jl (a_y)_jl for symmetric a_x
    value = (
        4.0 * k * _dot(bx, by)
        + 2.0 * _dot(bx, ay_gy)
        + 2.0 * _dot(by, ax_gx)
        + np.einsum("...jl,...jl->...", axH, ay)
    )
    if not cotangents:
        return PairTerm(value, None, None, None, None)
    kk = k[..., None]
    d_bx = 4.0 * kk * by + 2.0 * ay_gy
    d_by = 4.0 * kk * bx + 2.0 * ax_gx
    d_ax = 2.0 * by[..., :, None] * gx[..., None, :] + H @ ay
    d_ay = 2.0 * bx[..., :, None] * gy[..., None, :] + axH
    return PairTerm(value, d_bx, d_by, d_ax, d_ay)


def kds_terms(
    kernel: KernelSpec, x, y, bx, by, ax, ay, cotangents: bool = True, method: str = "auto"
) -> PairTerm:
    """Batched KDS pair value ``L_x L_y k`` from drift/diffusion values."""
    blk = high_order_blocks(
        kernel,
        x,
        y,
        ax,
        ay,
        bx if cotangents else None,
        by if cotangents else None,
        method,
        check=False,
    )
    Hby = _mv(blk.H, by)
    value = (
        _dot(bx, Hby)
        + 0.5 * _dot(bx, blk.g_x_of_t_y)
        + 0.5 * _dot(by, blk.g_y_of_t_x)
        + 0.25 * blk.tt
    )
    if not cotangents:
        return PairTerm(value, None, None, None, None)
    d_bx = Hby + 0.5 * blk.g_x_of_t_y
    d_by = np.einsum("...ij,...i->...j", blk.H, bx) + 0.5 * blk.g_y_of_t_x
    d_ax = 0.5 * blk.d3_y + 0.25 * blk.hess_x_t_y
    d_ay = 0.5 * blk.d3_x + 0.25 * blk.hess_y_t_x
    return PairTerm(value, d_bx, d_by, d_ax, d_ay)


def _single_pair(terms, model, phi, kernel, x, y, **kw) -> PairTerm:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (model.d,) or y.shape != (model.d,):
        raise InvalidInput(f"x and y must have shape ({model.d},), got {x.shape}, {y.shape}")
    if kernel.dim != model.d:
        raise InvalidInput(f"kernel dimension {kernel.dim} does not match model {model.d}")
    b = drift_eval(model, np.stack([x, y]), phi)
    a = diffusion_a_eval(model, np.stack([x, y]), phi)
    t = terms(kernel, x, y, b[0], b[1], a[0], a[1], **kw)
    if t.d_ax is None:
        return t
    return t._replace(d_ax=_sym(t.d_ax), d_ay=_sym(t.d_ay))


def skds_pair(model: SdeModel, phi, kernel: KernelSpec, x, y) -> PairTerm:
    return _single_pair(skds_terms, model, phi, kernel, x, y)


def kds_pair(model: SdeModel, phi, kernel: KernelSpec, x, y, method: str = "auto") -> float:
    return float(_single_pair(kds_terms, model, phi, kernel, x, y, cotangents=False, method=method).value)


# ---------------------------------------------------------------------------
# pairing schemes


def _linear_pairs(n):
    m = n // 2
    I = np.arange(0, 2 * m, 2)
    return I, I + 1


def _upper_pairs(n, budget):
    """All ``i < j`` pairs in row-major order, split into chunks of about ``budget``."""
    i = 0
    while i < n - 1:
        start, count = i, 0
        while i < n - 1 and (count == 0 or count + (n - 1 - i) <= budget):
            count += n - 1 - i
            i += 1
        rows = np.arange(start, i)
        lens = n - 1 - rows
        I = np.repeat(rows, lens)
        offs = np.arange(count) - np.repeat(np.cumsum(lens) - lens, lens)
        yield I, I + 1 + offs


def pair_chunks(n: int, estimator: str, budget: int = PAIR_BUDGET):
    """Yield ``(I, J)`` index chunks for the given estimator; fixed, deterministic order."""
    estimator = _estimator(estimator)
    if estimator == "linear_pairs":
        I, J = _linear_pairs(n)
        for s in range(0, len(I), budget):
            yield I[s : s + budget], J[s : s + budget]
    else:
        yield from _upper_pairs(n, budget)


def n_pairs(n: int, estimator: str) -> int:
    return n // 2 if _estimator(estimator) == "linear_pairs" else n * (n - 1) // 2


def _as_data(data, d=None):
    X = np.asarray(getattr(data, "X", data), dtype=float)
    if X.ndim == 1 and d == 1:
        X = X[:, None]
    if X.ndim != 2 or (d is not None and X.shape[1] != d):
        raise InvalidInput(f"data must have shape (N, {d}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("data contains non-finite values")
    return X


def _order(n, shuffle, seed):
    if not shuffle:
        return None
    return np.random.default_rng(seed).permutation(n)


# ---------------------------------------------------------------------------
# value-level estimators


class ValueGrad(NamedTuple):
    loss: float
    cot_b: np.ndarray | None  # (N, d)
    cot_a: np.ndarray | None  # (N, d, d)


def loss_from_values(
    loss: str,
    kernel: KernelSpec,
    X,
    b,
    a,
    estimator: str = "linear_pairs",
    cotangents: bool = True,
    method: str = "auto",
    workers: int = 1,
) -> ValueGrad:
    """Empirical loss from per-sample drift ``b`` (N, d) and diffusion ``a`` (N, d, d).

    Returns the mean pair value and, optionally, per-sample cotangents of that
    mean with respect to ``b`` and ``a``. Chunk results are combined in a fixed
    order, so the value is bitwise reproducible for any ``workers``.
    """
    if loss == "skds":
        terms = skds_terms
        extra = {}
    elif loss == "kds":
        terms = kds_terms
        extra = {"method": method}
    else:
        raise InvalidInput(f"unknown loss {loss!r}")
    n, d = X.shape
    if n < 2:
        raise InsufficientData(f"need at least 2 samples, got {n}")
    total = n_pairs(n, estimator)
    chunks = list(pair_chunks(n, estimator))

    def run(ch):
        I, J = ch
        return terms(kernel, X[I], X[J], b[I], b[J], a[I], a[J], cotangents=cotangents, **extra)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, chunks))
    else:
        results = [run(ch) for ch in chunks]

    value = 0.0
    for r in results:
        value += float(np.sum(r.value))
    value /= total
    if not cotangents:
        return ValueGrad(value, None, None)
    cot_b = np.zeros((n, d))
    cot_a = np.zeros((n, d, d))
    unique = _estimator(estimator) == "linear_pairs"  # each sample in at most one pair
    for (I, J), r in zip(chunks, results):
        if unique:
            cot_b[I] = r.d_bx
            cot_b[J] = r.d_by
            cot_a[I] = r.d_ax
            cot_a[J] = r.d_ay
        else:
            np.add.at(cot_b, I, r.d_bx)
            np.add.at(cot_b, J, r.d_by)
            np.add.at(cot_a, I, r.d_ax)
            np.add.at(cot_a, J, r.d_ay)
    return ValueGrad(value, cot_b / total, cot_a / total)


def _empirical(loss, model, phi, kernel, data, estimator, cotangents, shuffle, seed, **kw):
    X = _as_data(data, model.d)
    if X.shape[0] < 2:
        raise InsufficientData(f"need at least 2 samples, got {X.shape[0]}")
    if kernel.dim != model.d:
        raise InvalidInput(f"kernel dimension {kernel.dim} does not match model {model.d}")
    perm = _order(X.shape[0], shuffle, seed)
    if perm is not None:
        X = X[perm]
    b = drift_eval(model, X, phi)
    a = diffusion_a_eval(model, X, phi)
    return X, loss_from_values(loss, kernel, X, b, a, estimator, cotangents, **kw)


def skds_empirical(
    model: SdeModel,
    phi: Intervention | None,
    kernel: KernelSpec,
    data,
    estimator: str = "linear_pairs",
    shuffle: bool = False,
    seed: int = 0,
    workers: int = 1,
) -> float:
    """Empirical SKDS; ``linear_pairs`` pairs rows (0,1), (2,3), ... in stored order."""
    return _empirical(
        "skds", model, phi, kernel, data, estimator, False, shuffle, seed, workers=workers
    )[1].loss


def kds_empirical(
    model: SdeModel,
    phi: Intervention | None,
    kernel: KernelSpec,
    data,
    estimator: str = "linear_pairs",
    shuffle: bool = False,
    seed: int = 0,
    method: str = "auto",
) -> float:
    return _empirical(
        "kds", model, phi, kernel, data, estimator, False, shuffle, seed, method=method
    )[1].loss


class LossGrad(NamedTuple):
    loss: float
    grad_theta: dict
    grad_phi: dict


def _grad(loss, model, phi, kernel, data, estimator, shuffle, seed, **kw) -> LossGrad:
    X, vg = _empirical(loss, model, phi, kernel, data, estimator, True, shuffle, seed, **kw)
    gb: ParamGrad = drift_vjp(model, X, phi, vg.cot_b)
    ga: ParamGrad = diffusion_vjp(model, X, phi, vg.cot_a)
    theta = {**gb.theta, **ga.theta}
    phi_g = {k: gb.phi[k] + ga.phi[k] for k in gb.phi}
    return LossGrad(vg.loss, theta, phi_g)


def skds_grad(
    model: SdeModel,
    phi: Intervention | None,
    kernel: KernelSpec,
    data,
    estimator: str = "linear_pairs",
    shuffle: bool = False,
    seed: int = 0,
    workers: int = 1,
) -> LossGrad:
    """Loss and gradients w.r.t. model parameters and intervention ``(delta, log_beta)``."""
    return _grad("skds", model, phi, kernel, data, estimator, shuffle, seed, workers=workers)


def kds_grad(
    model: SdeModel,
    phi: Intervention | None,
    kernel: KernelSpec,
    data,
    estimator: str = "linear_pairs",
    shuffle: bool = False,
    seed: int = 0,
    method: str = "auto",
) -> LossGrad:
    return _grad("kds", model, phi, kernel, data, estimator, shuffle, seed, method=method)


def standard_error(
    model: SdeModel,
    phi: Intervention | None,
    kernel: KernelSpec,
    data,
    estimator: str = "linear_pairs",
    loss: str = "skds",
) -> float:
    """Monte-Carlo standard error of the empirical loss.

    ``linear_pairs``: sample standard deviation of the independent pair values
    over ``sqrt(#pairs)``. ``u_statistic``: leave-one-out jackknife.
    """
    X = _as_data(data, model.d)
    n = X.shape[0]
    est = _estimator(estimator)
    if n < 4:
        raise InsufficientData("standard error needs at least 4 samples")
    b = drift_eval(model, X, phi)
    a = diffusion_a_eval(model, X, phi)
    terms = skds_terms if loss == "skds" else kds_terms
    if est == "linear_pairs":
        I, J = _linear_pairs(n)
        v = terms(kernel, X[I], X[J], b[I], b[J], a[I], a[J], cotangents=False).value
        return float(np.std(v, ddof=1) / np.sqrt(len(v)))
    rows = np.zeros(n)
    total = 0.0
    for I, J in pair_chunks(n, est):
        v = terms(kernel, X[I], X[J], b[I], b[J], a[I], a[J], cotangents=False).value
        total += float(v.sum())
        rows += np.bincount(I, v, n) + np.bincount(J, v, n)
    loo = (total - rows) / ((n - 1) * (n - 2) / 2)
    return float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


# ---------------------------------------------------------------------------
# representer


def representer_eval(
    model: SdeModel, phi, kernel: KernelSpec, data, y, jacobian: bool = False
):
    """Empirical witness ``g(y) = mean_i [2 b(x_i) k(x_i, y) + a(x_i) grad_x k(x_i, y)]``.

    With ``jacobian=True`` also returns ``dg/dy`` of shape ``(d, d)``.
    """
    X = _as_data(data, model.d)
    if X.shape[0] < 1:
        raise InsufficientData("representer needs at least one sample")
    y = np.asarray(y, dtype=float)
    if y.shape != (model.d,):
        raise InvalidInput(f"query must have shape ({model.d},), got {y.shape}")
    b = drift_eval(model, X, phi)
    a = diffusion_a_eval(model, X, phi)
    k, gx, gy, H = kernel_derivatives(kernel, X, np.broadcast_to(y, X.shape))
    g = np.mean(2.0 * b * k[:, None] + _mv(a, gx), axis=0)
    if not jacobian:
        return g
    J = np.mean(2.0 * b[:, :, None] * gy[:, None, :] + a @ H, axis=0)
    return g, J


# ---------------------------------------------------------------------------
# quadratic form for linear parametrizations


@dataclass
class QuadraticForm:
    """``theta^T R_hat theta`` for ``theta = (B.ravel(), A)``.

    ``B`` is ``(d, l)`` so ``B.ravel()`` (row-major) lists ``B[r, i]`` at index
    ``r * l + i``; the diffusion weights ``A`` follow at ``d * l + p``.
    """

    R_hat: np.ndarray
    d: int
    l: int
    m: int
    n_pairs: int
    features: FeatureBasis
    diffusion_basis: DiffusionBasis

    @property
    def size(self):
        return self.d * self.l + self.m

    def layout(self):
        return {
            "B": {"offset": 0, "shape": [self.d, self.l], "order": "row-major"},
            "A": {"offset": self.d * self.l, "shape": [self.m]},
        }

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise InvalidInput(f"theta must have length {self.size}, got {theta.shape}")
        return theta[: self.d * self.l].reshape(self.d, self.l), theta[self.d * self.l :]

    def model(self, theta) -> SdeModel:
        """Linear model with these raw parameters (no frozen entries, no projection)."""
        B, A = self.split(theta)
        return SdeModel(
            self.d, "linear", "basis_cone", {"B": B, "A": A}, self.features, self.diffusion_basis
        )


DENSE_BLOCK = 1 << 21  # kernel-matrix entries per row block in the dense rbf path


def _rbf_dense_sums(kernel: KernelSpec, X, F):
    """Sums over all ordered pairs ``i != j`` of ``k F_i F_j^T``, ``F_i grad_y k^T`` and ``H``.

    rbf only. Each sum is a product with a row block of the kernel matrix; the
    ``r r^T`` term is expanded around the sample mean to limit cancellation.
    """
    n, d = X.shape
    q = kernel.q
    Z = X - X.mean(axis=0)
    KFF = np.zeros((F.shape[1], F.shape[1]))
    FZ = np.zeros((F.shape[1], d))
    ZZ = np.zeros((d, d))  # sum_i s_i z_i z_i^T - sum_ij k_ij z_i z_j^T
    ksum = 0.0
    b = max(1, DENSE_BLOCK // n)
    for s in range(0, n, b):
        I = np.arange(s, min(s + b, n))
        D2 = np.zeros((len(I), n))
        for c in range(d):
            D2 += (Z[I, c, None] - Z[None, :, c]) ** 2
        K = np.exp(-0.5 * q * D2)
        K[np.arange(len(I)), I] = 0.0
        row = K.sum(axis=1)
        ksum += row.sum()
        KZ = K @ Z
        KFF += F[I].T @ (K @ F)
        FZ += F[I].T @ (row[:, None] * Z[I] - KZ)
        ZZ += Z[I].T @ (row[:, None] * Z[I]) - Z[I].T @ KZ
    # sum_ij k_ij r r^T with r = z_i - z_j
    krr = ZZ + ZZ.T  # row sums equal column sums, so the i/j halves are transposes
    H = q * ksum * np.eye(d) - q * q * krr
    return KFF, q * FZ, H


def build_R_hat(
    features: FeatureBasis,
    diffusion_basis: DiffusionBasis | None,
    kernel: KernelSpec,
    data,
    estimator: str = "linear_pairs",
    dense: bool | None = None,
) -> QuadraticForm:
    """Assemble the symmetric matrix with ``skds_empirical = theta^T R_hat theta``.

    ``dense`` selects the kernel-matrix path (rbf with ``u_statistic`` only);
    ``None`` picks it automatically whenever it applies.
    """
    d = kernel.dim
    X = _as_data(data, d)
    n = X.shape[0]
    if n < 2:
        raise InsufficientData(f"need at least 2 samples, got {n}")
    if diffusion_basis is None:
        diffusion_basis = DiffusionBasis(np.zeros((0, d)))
    V = diffusion_basis.vectors
    l, m = len(features), V.shape[0]
    Kdd = np.zeros((l, l))
    Cda = np.zeros((l, m))  # drift at x, diffusion at y
    Cad = np.zeros((l, m))  # diffusion at x, drift at y
    Hsum = np.zeros((d, d))
    can_dense = kernel.family == "rbf" and _estimator(estimator) == "u_statistic"
    if dense and not can_dense:
        raise InvalidInput("dense path needs the rbf kernel and the u_statistic estimator")
    dense = can_dense if dense is None else dense
    if dense:
        # M(y, x) = M(x, y)^T, so the i < j sum is half the i != j sum after symmetrizing
        KFF, FG, H = _rbf_dense_sums(kernel, X, features(X))
        Kdd = 2.0 * KFF
        Cda = Cad = FG @ V.T
        Hsum = 0.5 * H
    for I, J in ([] if dense else pair_chunks(n, estimator)):
        x, y = X[I], X[J]
        k, gx, gy, H = kernel_derivatives(kernel, x, y)
        jx, jy = features(x), features(y)
        Kdd += 4.0 * (jx * k[:, None]).T @ jy
        if m:
            Cda += 2.0 * jx.T @ (gy @ V.T)
            Cad += 2.0 * jy.T @ (gx @ V.T)
            Hsum += H.sum(axis=0)
    Maa = V @ Hsum @ V.T  # the Hessian enters linearly
    total = n_pairs(n, estimator)
    M = np.zeros((d * l + m, d * l + m))
    M[: d * l, : d * l] = np.kron(np.eye(d), Kdd)
    if m:
        # M[(r, i), p] = Cda[i, p] V[p, r]
        M[: d * l, d * l :] = (V.T[:, None, :] * Cda[None, :, :]).reshape(d * l, m)
        M[d * l :, : d * l] = (V[:, :, None] * Cad.T[:, None, :]).reshape(m, d * l)
        M[d * l :, d * l :] = (V @ V.T) * Maa
    M /= total
    R = 0.5 * (M + M.T)
    return QuadraticForm(R, d, l, m, total, features, diffusion_basis)


def skds_quadratic(q: QuadraticForm, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (q.size,):
        raise InvalidInput(f"theta must have length {q.size}, got {theta.shape}")
    return float(theta @ q.R_hat @ theta)


def min_eig_sym(q) -> float:
    """Smallest eigenvalue of a symmetric matrix (or of ``q.R_hat``)."""
    R = q.R_hat if isinstance(q, QuadraticForm) else np.asarray(q, dtype=float)
    if R.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(R)[0])


def max_eig_sym(q) -> float:
    R = q.R_hat if isinstance(q, QuadraticForm) else np.asarray(q, dtype=float)
    if R.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(R)[-1])


# ---------------------------------------------------------------------------
# timing


@dataclass
class TimingReport:
    family: str
    d: int
    n: int
    repeats: int
    seed: int
    skds_ms_mean: float
    skds_ms_sd: float
    kds_ms_mean: float
    kds_ms_sd: float
    speedup: float
    skds_loss: float
    kds_loss: float

    def to_dict(self):
        return asdict(self)


def bench_problem(d: int, n: int, seed: int):
    """Random data and a random linear drift / constant linear diffusion."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    from skds.models import linear_model

    V = rng.normal(size=(d, d)) / np.sqrt(d)
    model = linear_model(
        d,
        diffusion="basis_cone",
        diffusion_basis=DiffusionBasis(V),
        B=rng.normal(size=(d, d + 1)) / np.sqrt(d),
        A=rng.uniform(0.5, 1.5, size=d),
    )
    return model, X


def _loss_and_grad(loss, model, kernel, X, estimator="linear_pairs"):
    b = drift_eval(model, X)
    a = diffusion_a_eval(model, X)
    vg = loss_from_values(loss, kernel, X, b, a, estimator)
    gb = drift_vjp(model, X, None, vg.cot_b)
    ga = diffusion_vjp(model, X, None, vg.cot_a)
    return vg.loss, gb.theta, ga.theta


def timing_bench(
    kernel_family: str = "rbf", d: int = 20, n: int = 1000, repeats: int = 50, seed: int = 0
) -> TimingReport:
    """Wall-clock of one loss + gradient step for SKDS and KDS on identical inputs.

    Both paths use analytic cotangents and the same linear-pair estimator; the
    thread count is whatever the BLAS runtime was started with (the CLI pins it to 1).
    """
    if d < 1 or n < 2 or repeats < 1:
        raise InvalidInput("timing_bench needs d >= 1, n >= 2, repeats >= 1")
    model, X = bench_problem(d, n, seed)
    kernel = KernelSpec(kernel_family, 1.0 * np.sqrt(d), d)
    out = {}
    for loss in ("skds", "kds"):
        val = _loss_and_grad(loss, model, kernel, X)[0]  # warm-up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            _loss_and_grad(loss, model, kernel, X)
            times.append((time.perf_counter() - t0) * 1e3)
        out[loss] = (float(np.mean(times)), float(np.std(times)), val)
    s, k = out["skds"], out["kds"]
    return TimingReport(
        kernel_family, d, n, repeats, seed, s[0], s[1], k[0], k[1], k[0] / s[0], s[2], k[2]
    )


__all__ = [
    "ESTIMATORS",
    "PairTerm",
    "QuadraticForm",
    "TimingReport",
    "build_R_hat",
    "kds_empirical",
    "kds_grad",
    "kds_pair",
    "loss_from_values",
    "min_eig_sym",
    "representer_eval",
    "skds_empirical",
    "skds_grad",
    "skds_pair",
    "skds_quadratic",
    "timing_bench",
]

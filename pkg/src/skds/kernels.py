"""Scalar positive-definite kernels and the derivative contractions used by the losses.

Every function accepts single points of shape ``(d,)`` or batches of pairs with
shape ``(..., d)`` (broadcast against each other) and returns the matching
leading shape. Matrix-valued outputs use the convention
``H[..., i, j] = d^2 k / (dx_i dy_j)``.

Three families are available:

* ``rbf``:        exp(-|x-y|^2 / (2 s^2))
* ``tilted_rbf``: rbf(x, y) / (w(x) w(y))
* ``imq_plus``:   (1/w(x-y) + 1 + <x, y>) / (w(x) w(y))

with ``w(z) = (1 + |z|^2)^(1/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import pdist

from skds.errors import InvalidInput, UnsupportedKernel

FAMILIES = ("rbf", "tilted_rbf", "imq_plus")

# central-difference step for the nested finite-difference fallback
FD_STEP = 1e-3


@dataclass(frozen=True)
class KernelSpec:
    family: str = "rbf"
    bandwidth: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInput(f"unknown kernel family {self.family!r}")
        bw = float(self.bandwidth)
        if not np.isfinite(bw) or bw <= 0:
            raise InvalidInput(f"bandwidth must be finite and > 0, got {self.bandwidth!r}")
        if int(self.dim) < 1:
            raise InvalidInput(f"dim must be >= 1, got {self.dim!r}")
        object.__setattr__(self, "bandwidth", bw)
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def q(self) -> float:
        """Inverse squared bandwidth."""
        return 1.0 / self.bandwidth**2

    def to_dict(self):
        return {"family": self.family, "bandwidth": self.bandwidth, "dim": self.dim}


def median_bandwidth(samples, max_points: int = 1000) -> float:
    """Median pairwise Euclidean distance of (the first ``max_points``) samples."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    X = X[:max_points]
    if len(X) < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0


def make_kernel(family: str, bandwidth, dim: int, data=None) -> KernelSpec:
    """Build a spec; ``bandwidth="median"`` applies the median heuristic to ``data``."""
    if isinstance(bandwidth, str):
        if bandwidth != "median":
            raise InvalidInput(f"bandwidth must be a float or 'median', got {bandwidth!r}")
        bandwidth = 1.0 if data is None else median_bandwidth(data)
    return KernelSpec(family=family, bandwidth=bandwidth, dim=dim)


def _prep(spec: KernelSpec, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 0 or y.ndim == 0 or x.shape[-1] != spec.dim or y.shape[-1] != spec.dim:
        raise InvalidInput(
            f"expected trailing dimension {spec.dim}, got {x.shape} and {y.shape}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInput("kernel inputs must be finite")
    return np.broadcast_arrays(x, y)


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


def _outer(u, v):
    return u[..., :, None] * v[..., None, :]


def _eye(d):
    return np.eye(d)


def _inv_weight(z):
    """u(z) = (1 + |z|^2)^(-1/2) and its gradient -z u^3."""
    u = 1.0 / np.sqrt(1.0 + _dot(z, z))
    return u, -z * (u**3)[..., None]


def _base(spec: KernelSpec, x, y):
    """Untilted part h(x, y) with grad_x h, grad_y h and the cross Hessian."""
    r = x - y
    d = spec.dim
    if spec.family in ("rbf", "tilted_rbf"):
        q = spec.q
        h = np.exp(-0.5 * q * _dot(r, r))
        gx = -q * r * h[..., None]
        gy = -gx
        H = h[..., None, None] * (q * _eye(d) - q * q * _outer(r, r))
        return h, gx, gy, H
    # imq_plus
    ur, _ = _inv_weight(r)
    h = ur + 1.0 + _dot(x, y)
    ur3 = ur**3
    gx = -r * ur3[..., None] + y
    gy = r * ur3[..., None] + x
    H = (ur3 + 1.0)[..., None, None] * _eye(d) - 3.0 * (ur**5)[..., None, None] * _outer(r, r)
    return h, gx, gy, H


def _derivs(spec: KernelSpec, x, y):
    h, hx, hy, Hh = _base(spec, x, y)
    if spec.family == "rbf":
        return h, hx, hy, Hh
    ux, dux = _inv_weight(x)
    uy, duy = _inv_weight(y)
    k = ux * uy * h
    gx = uy[..., None] * (dux * h[..., None] + ux[..., None] * hx)
    gy = ux[..., None] * (duy * h[..., None] + uy[..., None] * hy)
    H = (
        h[..., None, None] * _outer(dux, duy)
        + uy[..., None, None] * _outer(dux, hy)
        + ux[..., None, None] * _outer(hx, duy)
        + (ux * uy)[..., None, None] * Hh
    )
    return k, gx, gy, H


def kernel_value(spec: KernelSpec, x, y):
    x, y = _prep(spec, x, y)
    h, _, _, _ = _base(spec, x, y)
    if spec.family == "rbf":
        return h
    return _inv_weight(x)[0] * _inv_weight(y)[0] * h


def kernel_grad_x(spec: KernelSpec, x, y):
    x, y = _prep(spec, x, y)
    return _derivs(spec, x, y)[1]


def kernel_grad_y(spec: KernelSpec, x, y):
    x, y = _prep(spec, x, y)
    return _derivs(spec, x, y)[2]


def kernel_cross_hessian(spec: KernelSpec, x, y):
    x, y = _prep(spec, x, y)
    return _derivs(spec, x, y)[3]


def kernel_derivatives(spec: KernelSpec, x, y):
    """``(k, grad_x k, grad_y k, cross Hessian)`` in one pass."""
    x, y = _prep(spec, x, y)
    return _derivs(spec, x, y)


# ---------------------------------------------------------------------------
# fourth-order contractions (KDS)


class HighOrder(NamedTuple):
    t_y: np.ndarray  # tr(a_y grad_y grad_y k)
    g_x_of_t_y: np.ndarray  # grad_x t_y
    g_y_of_t_x: np.ndarray  # grad_y tr(a_x grad_x grad_x k)
    tt: np.ndarray  # tr(a_x grad_x grad_x^T t_y)
    analytic: bool


class HighOrderBlocks(NamedTuple):
    """Everything the KDS pair term and its cotangents need.

    ``d3_x``  = sum_i b_x[i] d/dx_i  grad_y grad_y k
    ``d3_y``  = sum_j b_y[j] d/dy_j  grad_x grad_x k
    ``hess_x_t_y`` = grad_x grad_x^T tr(a_y grad_y grad_y k)
    ``hess_y_t_x`` = grad_y grad_y^T tr(a_x grad_x grad_x k)
    """

    k: np.ndarray
    H: np.ndarray
    t_x: np.ndarray
    t_y: np.ndarray
    g_x_of_t_y: np.ndarray
    g_y_of_t_x: np.ndarray
    tt: np.ndarray
    d3_x: np.ndarray
    d3_y: np.ndarray
    hess_x_t_y: np.ndarray
    hess_y_t_x: np.ndarray
    analytic: bool


def _check_sym(a, name):
    a = np.asarray(a, dtype=float)
    if a.shape[-2:] != (a.shape[-1], a.shape[-1]):
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=1e-10, atol=1e-12):
        raise InvalidInput(f"{name} must be symmetric")
    return a


def _tr(a, M):
    """tr(a M) for symmetric a, batched."""
    return np.einsum("...ij,...ji->...", a, M)


def _rbf_blocks(spec, x, y, a_x, a_y, b_x, b_y):
    q = spec.q
    d = spec.dim
    r = x - y
    k = np.exp(-0.5 * q * _dot(r, r))
    kk = k[..., None, None]
    I = _eye(d)
    rr = _outer(r, r)
    Q = q * q * rr - q * I  # grad grad k / k in either argument
    H = kk * (q * I - q * q * rr)
    ar_x = np.einsum("...ij,...j->...i", a_x, r)
    ar_y = np.einsum("...ij,...j->...i", a_y, r)
    f_x = q * q * _dot(r, ar_x) - q * np.trace(a_x, axis1=-2, axis2=-1)
    f_y = q * q * _dot(r, ar_y) - q * np.trace(a_y, axis1=-2, axis2=-1)
    t_x = k * f_x
    t_y = k * f_y
    g_x_of_t_y = k[..., None] * (2 * q * q * ar_y - q * f_y[..., None] * r)
    g_y_of_t_x = -k[..., None] * (2 * q * q * ar_x - q * f_x[..., None] * r)
    tt = k * (
        2 * q * q * np.einsum("...ij,...ij->...", a_x, a_y)
        - 4 * q**3 * _dot(ar_x, ar_y)
        + f_x * f_y
    )
    hess_x_t_y = kk * (
        2 * q * q * a_y - 2 * q**3 * (_outer(r, ar_y) + _outer(ar_y, r)) + f_y[..., None, None] * Q
    )
    hess_y_t_x = kk * (
        2 * q * q * a_x - 2 * q**3 * (_outer(r, ar_x) + _outer(ar_x, r)) + f_x[..., None, None] * Q
    )
    if b_x is None:
        d3_x = d3_y = None
    else:
        d3_x = kk * (
            -q * _dot(b_x, r)[..., None, None] * Q + q * q * (_outer(b_x, r) + _outer(r, b_x))
        )
        d3_y = kk * (
            q * _dot(b_y, r)[..., None, None] * Q - q * q * (_outer(b_y, r) + _outer(r, b_y))
        )
    return HighOrderBlocks(
        k, H, t_x, t_y, g_x_of_t_y, g_y_of_t_x, tt, d3_x, d3_y, hess_x_t_y, hess_y_t_x, True
    )


def _fd_steps(z):
    return FD_STEP * (1.0 + np.max(np.abs(z), axis=-1))


def _fd_grad(f, z, h):
    """Central-difference gradient of a batched function f(z) (scalar or array valued)."""
    d = z.shape[-1]
    out = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        step = h[..., None] * e
        df = f(z + step) - f(z - step)
        hb = h.reshape(h.shape + (1,) * (df.ndim - h.ndim))
        out.append(df / (2 * hb))
    return np.stack(out, axis=-1)


def _fd_blocks(spec, x, y, a_x, a_y, b_x, b_y):
    hx = _fd_steps(x)
    hy = _fd_steps(y)

    def hess_yy(xx, yy):
        return _fd_grad(lambda z: _derivs(spec, xx, z)[2], yy, hy)

    def hess_xx(xx, yy):
        return _fd_grad(lambda z: _derivs(spec, z, yy)[1], xx, hx)

    def t_y_of(xx):
        return _tr(a_y, hess_yy(xx, y))

    def t_x_of(yy):
        return _tr(a_x, hess_xx(x, yy))

    k, _, _, H = _derivs(spec, x, y)
    Hyy = hess_yy(x, y)
    Hxx = hess_xx(x, y)
    t_y = _tr(a_y, Hyy)
    t_x = _tr(a_x, Hxx)
    g_x_of_t_y = _fd_grad(t_y_of, x, hx)
    g_y_of_t_x = _fd_grad(t_x_of, y, hy)
    hess_x_t_y = _fd_grad(lambda z: _fd_grad(t_y_of, z, hx), x, hx)
    hess_y_t_x = _fd_grad(lambda z: _fd_grad(t_x_of, z, hy), y, hy)
    hess_x_t_y = 0.5 * (hess_x_t_y + np.swapaxes(hess_x_t_y, -1, -2))
    hess_y_t_x = 0.5 * (hess_y_t_x + np.swapaxes(hess_y_t_x, -1, -2))
    tt = _tr(a_x, hess_x_t_y)
    if b_x is None:
        d3_x = d3_y = None
    else:
        # directional derivatives along b; step scaled by |b| so the probe stays O(h)
        def ddir(fun, z, b, h):
            nb = np.sqrt(_dot(b, b))
            safe = np.where(nb > 0, nb, 1.0)
            s = (h / safe)[..., None]
            out = (fun(z + s * b) - fun(z - s * b)) / (2 * s[..., None])
            return np.where((nb > 0)[..., None, None], out, 0.0)

        d3_x = ddir(lambda z: hess_yy(z, y), x, b_x, hx)
        d3_y = ddir(lambda z: hess_xx(x, z), y, b_y, hy)
    return HighOrderBlocks(
        k, H, t_x, t_y, g_x_of_t_y, g_y_of_t_x, tt, d3_x, d3_y, hess_x_t_y, hess_y_t_x, False
    )


def high_order_blocks(
    spec: KernelSpec,
    x,
    y,
    a_x,
    a_y,
    b_x=None,
    b_y=None,
    method: str = "auto",
    check: bool = True,
) -> HighOrderBlocks:
    """Kernel derivative blocks up to fourth order, contracted with ``a_x``/``a_y``.

    ``method`` is ``"auto"`` (analytic for rbf, finite differences otherwise),
    ``"analytic"`` (rbf only) or ``"fd"``. ``check=False`` skips the symmetry
    test on ``a_x``/``a_y`` for callers that guarantee it.
    """
    x, y = _prep(spec, x, y)
    if check:
        a_x = _check_sym(a_x, "a_x")
        a_y = _check_sym(a_y, "a_y")
    else:
        a_x = np.asarray(a_x, dtype=float)
        a_y = np.asarray(a_y, dtype=float)
    if b_x is not None:
        b_x, b_y = np.broadcast_arrays(np.asarray(b_x, float), np.asarray(b_y, float))
    if method == "auto":
        method = "analytic" if spec.family == "rbf" else "fd"
    if method == "analytic":
        if spec.family != "rbf":
            raise UnsupportedKernel(
                f"analytic fourth-order derivatives are only available for rbf, not {spec.family}"
            )
        return _rbf_blocks(spec, x, y, a_x, a_y, b_x, b_y)
    if method == "fd":
        return _fd_blocks(spec, x, y, a_x, a_y, b_x, b_y)
    raise InvalidInput(f"unknown method {method!r}")


def kernel_high_order(spec: KernelSpec, x, y, a_x, a_y, method: str = "auto") -> HighOrder:
    """The four contractions entering the KDS closed form; see :class:`HighOrder`."""
    blk = high_order_blocks(spec, x, y, a_x, a_y, method=method)
    return HighOrder(blk.t_y, blk.g_x_of_t_y, blk.g_y_of_t_x, blk.tt, blk.analytic)


def gram_matrix(spec: KernelSpec, X):
    X = np.asarray(X, dtype=float)
    return kernel_value(spec, X[:, None, :], X[None, :, :])

"""Independent reference computations used across the test suite.

Everything here is built from scalar kernel values and pointwise model
evaluations with finite differences or enumeration, never from the closed
forms under test.
"""

import itertools

import numpy as np

from skds.kernels import KernelSpec, kernel_value
from skds.models import (
    DiffusionBasis,
    Feature,
    FeatureBasis,
    Intervention,
    diffusion_a_eval,
    drift_eval,
    linear_model,
    mlp_model,
)


def fd_grad(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jac(f, x, h=1e-5):
    """Central-difference Jacobian ``J[i, j] = d f_i / d x_j`` of a vector function."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_hess(f, x, h):
    """Central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.zeros((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
            H[i, j] = H[j, i] = v
    return H


def point_fns(model, phi=None):
    b = lambda z: drift_eval(model, np.asarray(z)[None], phi)[0]  # noqa: E731
    a = lambda z: np.array(diffusion_a_eval(model, np.asarray(z)[None], phi)[0])  # noqa: E731
    return b, a


def skds_operator_oracle(kernel: KernelSpec, b, a, x, y, h=1e-4):
    """Apply ``g -> 2<b, g> + tr(a grad g)`` to ``K = k I`` in ``x``, then in ``y``.

    The inner application produces the vector field
    ``v(y) = 2 b(x) k(x, y) + a(x) grad_x k(x, y)`` with the gradient taken by
    finite differences; the outer application differentiates ``v`` in ``y``
    by finite differences again.
    """
    k = lambda u, w: float(kernel_value(kernel, u, w))  # noqa: E731
    bx, ax = b(x), a(x)

    def v(yy):
        gx = fd_grad(lambda u: k(u, yy), x, h)
        return 2 * bx * k(x, yy) + ax @ gx

    Jv = fd_jac(v, y, h)  # Jv[j, i] = d v_j / d y_i
    return float(2 * b(y) @ v(y) + np.sum(a(y) * Jv.T))


def generator_oracle(kernel: KernelSpec, b, a, x, y, h=4e-2):
    """``L_x L_y k`` with ``L f = <b, grad f> + tr(a Hess f) / 2`` by nested FD.

    Richardson-extrapolated over steps ``h`` and ``h / 2`` to cancel the
    leading ``O(h^2)`` truncation term.
    """
    coarse = _generator_fd(kernel, b, a, x, y, h)
    fine = _generator_fd(kernel, b, a, x, y, h / 2)
    return (4 * fine - coarse) / 3


def _generator_fd(kernel, b, a, x, y, h):
    k = lambda u, w: float(kernel_value(kernel, u, w))  # noqa: E731

    def Ly(xx):
        g = fd_grad(lambda w: k(xx, w), y, h)
        H = fd_hess(lambda w: k(xx, w), y, h)
        return b(y) @ g + 0.5 * np.sum(a(y) * H)

    g = fd_grad(Ly, x, h)
    H = fd_hess(Ly, x, h)
    return float(b(x) @ g + 0.5 * np.sum(a(x) * H))


def random_features(rng, d, l):
    """Random basis of ``l`` features drawn from all supported kinds."""
    out = []
    for _ in range(l):
        kind = rng.choice(["const", "coord", "mono", "tanh"])
        if kind == "const":
            out.append(Feature("const"))
        elif kind == "coord":
            out.append(Feature("coord", int(rng.integers(d))))
        elif kind == "mono":
            out.append(Feature("mono", int(rng.integers(d)), int(rng.integers(d))))
        else:
            out.append(Feature("tanh", w=tuple(rng.normal(size=d)), c=float(rng.normal())))
    return FeatureBasis(tuple(out))


def random_model(rng, d, kind=None, diffusion=None, hidden=None):
    """Random linear or MLP model with random (free) parameters."""
    kind = kind or rng.choice(["linear", "mlp"])
    diffusion = diffusion or rng.choice(["diag_exp", "basis_cone"])
    basis = None
    if diffusion == "basis_cone":
        basis = DiffusionBasis(rng.normal(size=(int(rng.integers(1, 4)), d)))
    if kind == "linear":
        feats = random_features(rng, d, int(rng.integers(1, 5)))
        l = len(feats)
        model = linear_model(
            d,
            feats,
            diffusion,
            basis,
            B=rng.normal(size=(d, l)),
            s=rng.normal(scale=0.3, size=d),
            A=rng.uniform(0.2, 1.5, size=len(basis) if basis is not None else 0),
            fix_self_loops=bool(rng.integers(2)),
        )
    else:
        model = mlp_model(d, hidden or int(rng.choice([2, 4])), diffusion, basis, seed=int(rng.integers(1 << 30)))
        p = model.params
        p["bias"] = rng.normal(size=d)
        p["v"] = rng.normal(size=p["v"].shape)
        if diffusion == "diag_exp":
            p["s"] = rng.normal(scale=0.3, size=d)
        else:
            p["A"] = rng.uniform(0.2, 1.5, size=p["A"].shape)
        model.project()
    return model


def random_intervention(rng, d):
    if rng.random() < 0.3:
        return None
    t = rng.choice(d, size=int(rng.integers(1, d + 1)), replace=False)
    return Intervention(tuple(t.tolist()), rng.normal(size=len(t)), rng.normal(scale=0.3, size=len(t)))


def brute_force_assignment(A, B):
    """Minimum mean Euclidean matching cost over all permutations."""
    n = len(A)
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, D[np.arange(n), perm].sum())
    return best / n


def signed_rank_enumeration(ranks, w):
    """``P(W+ <= w)`` by enumerating every sign pattern."""
    ranks = np.asarray(ranks, float)
    n = len(ranks)
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        if np.dot(signs, ranks) <= w + 1e-9:
            count += 1
    return count / 2**n


def fd_loss_grad(loss_fn, m, phi, h=1e-6):
    """Central differences of ``loss_fn(model, phi)`` in every free parameter."""
    out = {}
    for name, val in m.params.items():
        g = np.zeros_like(val)
        for idx in np.ndindex(val.shape):
            if name in m.frozen and m.frozen[name][idx]:
                continue
            p = {k: v.copy() for k, v in m.params.items()}
            p[name][idx] += h
            up = loss_fn(m.with_params(p), phi)
            p[name][idx] -= 2 * h
            g[idx] = (up - loss_fn(m.with_params(p), phi)) / (2 * h)
        out[name] = g
    phis = {}
    if phi is not None:
        for name, val in phi.params().items():
            g = np.zeros_like(val)
            for idx in np.ndindex(val.shape):
                p = {k: v.copy() for k, v in phi.params().items()}
                p[name][idx] += h
                up = loss_fn(m, phi.with_params(p))
                p[name][idx] -= 2 * h
                g[idx] = (up - loss_fn(m, phi.with_params(p))) / (2 * h)
            phis[name] = g
    return out, phis

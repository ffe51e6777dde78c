"""Synthetic causal benchmarks: random graphs, cyclic linear SDE/SCM systems,
shifted environments, standardization and on-disk bundles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from skds.dataset import Dataset, read_csv, to_csv_text
from skds.errors import InvalidInput, NearSingular
from skds.models import Intervention
from skds.simulator import lyapunov_solve, ou_exact_sample

WEIGHT_RANGE = (0.25, 1.0)
NOISE_RANGE = (0.5, 1.5)
MEAN_RANGE = 2.0
SPECTRAL_CAP = 0.8


def _rng(seed):
    return np.random.default_rng(seed)


def _child_seeds(seed, n):
    """``n`` independent integer seeds derived from ``seed``."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


# ---------------------------------------------------------------------------
# graphs


@dataclass
class Graph:
    """``adj[i, j] = 1`` encodes the edge ``i -> j``."""

    d: int
    adj: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adj).astype(np.int8)
        if adj.shape != (self.d, self.d):
            raise InvalidInput(f"adjacency must be {self.d}x{self.d}")
        if np.any(np.diag(adj)) or np.any((adj != 0) & (adj != 1)):
            raise InvalidInput("adjacency must be binary with zero diagonal")
        self.adj = adj

    @property
    def n_edges(self):
        return int(self.adj.sum())

    def edges(self):
        return [tuple(e) for e in np.argwhere(self.adj).tolist()]

    def is_acyclic(self):
        A = self.adj.astype(float)
        P = np.eye(self.d)
        for _ in range(self.d):
            P = P @ A
            if np.trace(P) > 0:
                return False
        return True

    def to_dict(self):
        return {"d": self.d, "adj": self.adj.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["d"], np.asarray(d["adj"]))


def sample_er_graph(d: int, expected_degree: float = 3.0, seed: int = 0) -> Graph:
    """Each ordered pair gets an edge with ``p = expected_degree / (2 (d - 1))``."""
    if d < 2 or not 0 <= expected_degree < d:
        raise InvalidInput("need d >= 2 and 0 <= expected_degree < d")
    p = expected_degree / (2.0 * (d - 1))
    adj = (_rng(seed).random((d, d)) < p).astype(np.int8)
    np.fill_diagonal(adj, 0)
    return Graph(d, adj)


def sample_sf_graph(d: int, seed: int = 0, links: int = 2) -> Graph:
    """Preferential attachment with ``links`` draws per new node, edges randomly directed.

    The seed graph is the single edge 0-1. Each new node draws ``links`` targets
    with replacement, proportionally to current degree; repeated draws collapse.
    """
    if d < 3:
        raise InvalidInput("scale-free graphs need d >= 3")
    rng = _rng(seed)
    und = [(0, 1)]
    deg = np.zeros(d)
    deg[[0, 1]] = 1
    for v in range(2, d):
        p = deg[:v] / deg[:v].sum()
        targets = sorted(set(rng.choice(v, size=links, p=p).tolist()))
        for u in targets:
            und.append((u, v))
            deg[u] += 1
            deg[v] += 1
    adj = np.zeros((d, d), dtype=np.int8)
    flips = rng.random(len(und)) < 0.5
    for (u, v), f in zip(und, flips):
        if f:
            adj[v, u] = 1
        else:
            adj[u, v] = 1
    return Graph(d, adj)


def sample_graph(kind: str, d: int, seed: int, expected_degree: float = 3.0) -> Graph:
    if kind == "er":
        return sample_er_graph(d, expected_degree, seed)
    if kind == "sf":
        return sample_sf_graph(d, seed)
    raise InvalidInput(f"unknown graph kind {kind!r}")


# ---------------------------------------------------------------------------
# systems


def _edge_weights(graph, rng):
    """``W[j, i]`` is the weight of ``i -> j``; magnitudes uniform on WEIGHT_RANGE, random sign."""
    mag = rng.uniform(*WEIGHT_RANGE, size=(graph.d, graph.d))
    sign = np.where(rng.random((graph.d, graph.d)) < 0.5, -1.0, 1.0)
    return np.where(graph.adj.T == 1, (mag * sign).T, 0.0)


def gen_linear_sde_system(graph: Graph, seed: int = 0):
    """Stable ``dX = M (X - mean) dt + D dB`` on the graph; returns ``(M, D, mean)``.

    Off-diagonal rows are made strictly diagonally dominant with a negative
    diagonal, so every Gershgorin disc sits in the open left half-plane.
    """
    rng = _rng(seed)
    M = _edge_weights(graph, rng)
    np.fill_diagonal(M, -(1.0 + np.abs(M).sum(axis=1)))
    D = np.diag(rng.uniform(*NOISE_RANGE, size=graph.d))
    mean = rng.uniform(-MEAN_RANGE, MEAN_RANGE, size=graph.d)
    return M, D, mean


def spectral_radius(W) -> float:
    W = np.asarray(W, dtype=float)
    if W.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(W))))


def gen_linear_scm_system(graph: Graph, seed: int = 0):
    """Cyclic linear SCM ``x = W x + eps``; returns ``(W, noise_scale)`` with rho(W) <= 0.8."""
    rng = _rng(seed)
    W = _edge_weights(graph, rng)
    rho = spectral_radius(W)
    if rho > SPECTRAL_CAP:
        W = W * (SPECTRAL_CAP / rho)
    noise = rng.uniform(*NOISE_RANGE, size=graph.d)
    return W, noise


def scm_sample(W, noise_scale, shift, n: int, seed: int = 0) -> Dataset:
    """Rows ``x = (I - W)^{-1} (eps + shift)`` with ``eps ~ N(0, diag(noise_scale^2))``."""
    W = np.asarray(W, dtype=float)
    d = W.shape[0]
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (d,))
    E = _rng(seed).standard_normal((n, d)) * np.asarray(noise_scale, dtype=float) + shift
    A = np.eye(d) - W
    try:
        X = np.linalg.solve(A, E.T).T
    except np.linalg.LinAlgError:
        raise NearSingular("I - W is singular") from None
    res = np.abs(X @ A.T - E).max() if n else 0.0
    if not np.isfinite(res) or res > 1e-8 * max(1.0, np.abs(E).max() if n else 1.0):
        raise NearSingular(f"equilibrium solve residual {res:.3g}")
    return Dataset(X, env="scm")


# ---------------------------------------------------------------------------
# benchmark bundles


@dataclass
class Environment:
    name: str
    intervention: Intervention
    data: Dataset


@dataclass
class BenchmarkBundle:
    kind: str
    graph: Graph
    system: dict
    observational: Dataset
    train_envs: list
    test_envs: list
    standardization: dict
    config: dict = field(default_factory=dict)

    @property
    def d(self):
        return self.graph.d

    def standardize(self, X):
        return (np.asarray(X) - self.standardization["mean"]) / self.standardization["std"]

    def to_dict(self):
        def env(e):
            return {
                "name": e.name,
                "targets": list(e.intervention.targets),
                "shift": e.intervention.delta.tolist(),
                "n": e.data.n,
            }

        return {
            "kind": self.kind,
            "config": self.config,
            "graph": self.graph.to_dict(),
            "system": {k: np.asarray(v).tolist() for k, v in self.system.items()},
            "standardization": {k: np.asarray(v).tolist() for k, v in self.standardization.items()},
            "train_envs": [env(e) for e in self.train_envs],
            "test_envs": [env(e) for e in self.test_envs],
        }


def standardize_bundle(bundle: BenchmarkBundle) -> BenchmarkBundle:
    """Re-standardize every dataset by the observational column mean/std.

    The stored ``standardization`` composes with the existing one, so applying
    this to an already standardized bundle leaves the data unchanged.
    """
    X = bundle.observational.X
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)

    def tr(ds):
        return Dataset((ds.X - mu) / sd, ds.env, ds.targets, dict(ds.meta))

    old = bundle.standardization
    new = {"mean": old["mean"] + old["std"] * mu, "std": old["std"] * sd}
    return BenchmarkBundle(
        bundle.kind,
        bundle.graph,
        bundle.system,
        tr(bundle.observational),
        [Environment(e.name, e.intervention, tr(e.data)) for e in bundle.train_envs],
        [Environment(e.name, e.intervention, tr(e.data)) for e in bundle.test_envs],
        new,
        bundle.config,
    )


def make_benchmark(
    kind: str = "sde",
    graph_kind: str = "er",
    d: int = 5,
    n_per_env: int = 1000,
    n_train_env: int = 3,
    n_test_env: int = 2,
    shift_magnitude: float = 2.0,
    seed: int = 0,
    expected_degree: float = 3.0,
) -> BenchmarkBundle:
    """Generate a ground-truth system with observational, train and test environments.

    Each interventional environment shifts one distinct variable by
    ``+-shift_magnitude`` (SDE: drift; SCM: noise). All data are standardized by
    the observational mean and standard deviation.
    """
    if kind not in ("sde", "scm"):
        raise InvalidInput(f"unknown system kind {kind!r}")
    if n_train_env < 0 or n_test_env < 0 or n_train_env + n_test_env > d:
        raise InvalidInput("need 0 <= n_train_env + n_test_env <= d")
    if n_per_env < 2:
        raise InvalidInput("n_per_env must be at least 2")
    s_graph, s_sys, s_split, s_obs, s_env = _child_seeds(seed, 5)
    graph = sample_graph(graph_kind, d, s_graph, expected_degree)
    if kind == "sde":
        M, D, mean = gen_linear_sde_system(graph, s_sys)
        Q = D @ D.T
        lyapunov_solve(M, Q)
        system = {"M": M, "D": D, "mean": mean}

        def draw(shift, s):
            # M (x - mean) + shift = M (x - (mean - M^{-1} shift))
            mu = mean - np.linalg.solve(M, shift)
            return ou_exact_sample(M, mu, Q, n_per_env, s).X

    else:
        W, noise = gen_linear_scm_system(graph, s_sys)
        system = {"W": W, "noise_scale": noise}

        def draw(shift, s):
            return scm_sample(W, noise, shift, n_per_env, s).X

    rng = _rng(s_split)
    targets = rng.permutation(d)[: n_train_env + n_test_env]
    signs = np.where(rng.random(len(targets)) < 0.5, -1.0, 1.0)
    env_seeds = _child_seeds(s_env, len(targets))

    obs = Dataset(draw(np.zeros(d), s_obs), env="obs")
    envs = []
    for i, (t, sg, s) in enumerate(zip(targets, signs, env_seeds)):
        shift = np.zeros(d)
        shift[t] = sg * shift_magnitude
        phi = Intervention((int(t),), [shift[t]])
        split = "train" if i < n_train_env else "test"
        idx = i if i < n_train_env else i - n_train_env
        name = f"{split}_{idx}"
        envs.append(Environment(name, phi, Dataset(draw(shift, s), env=name, targets=(int(t),))))
    config = {
        "kind": kind,
        "graph_kind": graph_kind,
        "d": d,
        "n_per_env": n_per_env,
        "n_train_env": n_train_env,
        "n_test_env": n_test_env,
        "shift_magnitude": shift_magnitude,
        "seed": seed,
        "expected_degree": expected_degree,
        "weight_range": list(WEIGHT_RANGE),
    }
    raw = BenchmarkBundle(
        kind,
        graph,
        system,
        obs,
        envs[:n_train_env],
        envs[n_train_env:],
        {"mean": np.zeros(d), "std": np.ones(d)},
        config,
    )
    return standardize_bundle(raw)


def save_bundle(bundle: BenchmarkBundle, out_dir) -> Path:
    """Write ``bundle.json`` plus ``obs.csv``, ``train_<i>.csv``, ``test_<i>.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bundle.json").write_text(json.dumps(bundle.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "obs.csv").write_text(to_csv_text(bundle.observational.X))
    for e in bundle.train_envs + bundle.test_envs:
        (out / f"{e.name}.csv").write_text(to_csv_text(e.data.X))
    return out


def load_bundle(path) -> BenchmarkBundle:
    path = Path(path)
    meta = json.loads((path / "bundle.json").read_text())
    graph = Graph.from_dict(meta["graph"])
    obs = Dataset(read_csv(path / "obs.csv"), env="obs")

    def env(e):
        phi = Intervention(tuple(e["targets"]), e.get("shift"))
        X = read_csv(path / f"{e['name']}.csv")
        if X.shape[1] != graph.d:
            raise InvalidInput(f"{e['name']}.csv has {X.shape[1]} columns, expected {graph.d}")
        return Environment(e["name"], phi, Dataset(X, env=e["name"], targets=phi.targets))

    return BenchmarkBundle(
        meta["kind"],
        graph,
        {k: np.asarray(v) for k, v in meta["system"].items()},
        obs,
        [env(e) for e in meta["train_envs"]],
        [env(e) for e in meta["test_envs"]],
        {k: np.asarray(v) for k, v in meta["standardization"].items()},
        meta.get("config", {}),
    )

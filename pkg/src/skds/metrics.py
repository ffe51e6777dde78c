"""Evaluation metrics: sample Wasserstein distance, mean MSE, paired Wilcoxon margin test.

``wasserstein`` follows the transport definition ``inf E |X - Z|_2`` (Euclidean
cost, no square), computed as the optimal matching between equal-size samples.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import gammaln, ndtr

from skds.errors import InsufficientData, InvalidInput, NonPositiveValue

EXACT_MAX_N = 1024
N_PROJECTIONS = 128
EXACT_WILCOXON_MAX_N = 25


@dataclass
class MetricReport:
    w2: float
    mean_mse: float
    n_a: int
    n_b: int
    method: str
    resampled: bool = False

    def to_dict(self):
        return asdict(self)


def _samples(A, name):
    A = np.asarray(getattr(A, "X", A), dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] == 0:
        raise InsufficientData(f"{name} is empty")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} contains non-finite values")
    return A


def _equalize(A, B, seed):
    """Resample the smaller set with replacement so both have the same size."""
    if A.shape[0] == B.shape[0]:
        return A, B, False
    rng = np.random.default_rng(seed)
    if A.shape[0] < B.shape[0]:
        return A[rng.integers(A.shape[0], size=B.shape[0])], B, True
    return A, B[rng.integers(B.shape[0], size=A.shape[0])], True


def _mean_abs_projection(d):
    """``E |<u, e>|`` for ``u`` uniform on the unit sphere and a unit vector ``e``.

    Dividing the projected average by this makes pure translations exact.
    """
    return float(np.exp(gammaln(d / 2) - gammaln((d + 1) / 2)) / np.sqrt(np.pi))


def _sorted_1d(a, b):
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def wasserstein_detail(A, B, seed: int = 0, n_projections: int = N_PROJECTIONS, method: str = "auto"):
    """Return ``(distance, method, resampled)``.

    ``method`` is ``"auto"``, ``"exact_assignment"``, ``"sorted_1d"`` or ``"sliced"``.
    """
    A = _samples(A, "A")
    B = _samples(B, "B")
    if A.shape[1] != B.shape[1]:
        raise InvalidInput(f"dimension mismatch {A.shape[1]} vs {B.shape[1]}")
    A, B, resampled = _equalize(A, B, seed)
    n, d = A.shape
    if method == "auto":
        method = "sorted_1d" if d == 1 else ("exact_assignment" if n <= EXACT_MAX_N else "sliced")
    if method == "sorted_1d":
        if d != 1:
            raise InvalidInput("sorted matching is only exact in one dimension")
        return _sorted_1d(A[:, 0], B[:, 0]), method, resampled
    if method == "exact_assignment":
        C = cdist(A, B)
        r, c = linear_sum_assignment(C)
        return float(C[r, c].mean()), method, resampled
    if method == "sliced":
        rng = np.random.default_rng(seed)
        P = rng.standard_normal((n_projections, d))
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        vals = [_sorted_1d(A @ p, B @ p) for p in P]
        return float(np.mean(vals)) / _mean_abs_projection(d), f"sliced({n_projections})", resampled
    raise InvalidInput(f"unknown method {method!r}")


def wasserstein(A, B, seed: int = 0, n_projections: int = N_PROJECTIONS, method: str = "auto") -> float:
    return wasserstein_detail(A, B, seed, n_projections, method)[0]


def mean_mse(A, B) -> float:
    """``|mean(A) - mean(B)|^2 / d``."""
    A = _samples(A, "A")
    B = _samples(B, "B")
    if A.shape[1] != B.shape[1]:
        raise InvalidInput(f"dimension mismatch {A.shape[1]} vs {B.shape[1]}")
    diff = A.mean(axis=0) - B.mean(axis=0)
    return float(diff @ diff / A.shape[1])


def metric_report(A, B, seed: int = 0) -> MetricReport:
    A = _samples(A, "A")
    B = _samples(B, "B")
    w, method, resampled = wasserstein_detail(A, B, seed)
    return MetricReport(w, mean_mse(A, B), A.shape[0], B.shape[0], method, resampled)


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank with a multiplicative margin


def _midranks(x):
    """Ranks 1..n with ties replaced by their average."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def exact_signed_rank_cdf(ranks, w: float) -> float:
    """``P(W+ <= w)`` under the sign-flip null, for (possibly half-integer) ranks.

    Doubling the ranks makes them integers; the null distribution of the sum of
    positive ranks is then the subset-sum count over ``2^n`` sign patterns.
    """
    r2 = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in r2:
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    k = int(np.floor(2 * w + 1e-9))
    if k < 0:
        return 0.0
    return float(counts[: min(k, total) + 1].sum() / 2.0 ** len(r2))


def wilcoxon_margin_test(
    ours,
    baseline,
    margin: float = 0.05,
    direction: str = "ours_better",
    method: str = "auto",
) -> dict:
    """One-sided signed-rank test on ``log(ours / baseline) - log(1 - margin)``.

    ``ours_better`` tests whether the median shifted log-ratio is below zero
    (ours beats the baseline by more than the margin); ``baseline_better`` tests
    the opposite sign. Returns ``{p_value, n_effective, statistic, method, direction}``.
    """
    ours = np.asarray(ours, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if ours.shape != baseline.shape or ours.ndim != 1:
        raise InvalidInput("ours and baseline must be equal-length 1-D sequences")
    if len(ours) < 5:
        raise InsufficientData("need at least 5 paired values")
    if np.any(ours <= 0) or np.any(baseline <= 0):
        raise NonPositiveValue("metric values must be positive")
    if direction not in ("ours_better", "baseline_better"):
        raise InvalidInput(f"unknown direction {direction!r}")
    if not 0 <= margin < 1:
        raise InvalidInput("margin must lie in [0, 1)")
    d = np.log(ours) - np.log(baseline) - np.log1p(-margin)
    if direction == "baseline_better":
        d = -d
    # H1: median(d) < 0; small W+ is evidence
    d = d[np.abs(d) > 1e-12 * np.maximum(1.0, np.abs(np.log(ours)))]
    n = len(d)
    if n == 0:
        raise InsufficientData("all shifted log-ratios are zero")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= EXACT_WILCOXON_MAX_N else "normal"
    if method == "exact":
        p = exact_signed_rank_cdf(ranks, w_plus)
    elif method == "normal":
        mu = n * (n + 1) / 4.0
        _, tcount = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tcount**3 - tcount) / 48.0
        if var <= 0:
            raise InsufficientData("degenerate rank variance")
        z = (w_plus - mu + 0.5) / np.sqrt(var)
        p = float(ndtr(z))
    else:
        raise InvalidInput(f"unknown method {method!r}")
    return {
        "p_value": min(1.0, p),
        "n_effective": n,
        "statistic": w_plus,
        "method": method,
        "direction": direction,
        "margin": margin,
    }

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_assignment, signed_rank_enumeration

from skds.errors import InsufficientData, InvalidInput, NonPositiveValue
from skds.metrics import (
    _midranks,
    exact_signed_rank_cdf,
    mean_mse,
    metric_report,
    wasserstein,
    wasserstein_detail,
    wilcoxon_margin_test,
)


def ks_uniform(p):
    """Kolmogorov-Smirnov distance of a sample to U(0, 1)."""
    p = np.sort(np.asarray(p))
    n = len(p)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - p), np.max(p - (i - 1) / n)))


# ---------------------------------------------------------------------------
# Wasserstein


def test_wasserstein_examples():
    A = np.random.default_rng(0).normal(size=(30, 3))
    assert wasserstein(A, A) == 0
    assert wasserstein([[0.0]], [[3.0]]) == 3.0
    assert wasserstein([[0.0], [1.0]], [[1.0], [0.0]]) == 0.0


@pytest.mark.parametrize("method", ["exact_assignment", "auto"])
def test_translation_is_exact(method):
    A = np.random.default_rng(1).normal(size=(200, 2))
    v = np.array([1.0, 0.0])
    assert wasserstein(A, A + v, method=method) == pytest.approx(1.0, abs=1e-9)


def test_sliced_translation_within_projection_noise():
    # rescaling is unbiased over directions; with 128 random directions in
    # d = 2 the relative sd of the projected mean |u . v| is about 0.043
    A = np.random.default_rng(1).normal(size=(200, 2))
    vals = [wasserstein(A, A + [1.0, 0.0], method="sliced", seed=s) for s in range(20)]
    assert all(abs(v - 1.0) <= 0.13 for v in vals)
    assert abs(np.mean(vals) - 1.0) <= 3 * 0.043 / np.sqrt(20)


def test_exact_matches_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n, d = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        A, B = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        got = wasserstein(A, B, method="exact_assignment")
        assert abs(got - brute_force_assignment(A, B)) <= 1e-12


def test_symmetry_and_triangle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(2, 65))
        A, B, C = (rng.normal(size=(n, 3)) + rng.normal(size=3) for _ in range(3))
        ab, ba = wasserstein(A, B), wasserstein(B, A)
        assert abs(ab - ba) <= 1e-10
        assert wasserstein(A, C) <= ab + wasserstein(B, C) + 1e-9


def test_sorted_1d_matches_assignment():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(50, 1)), rng.normal(size=(50, 1))
    w1, m1, _ = wasserstein_detail(a, b)
    assert m1 == "sorted_1d"
    assert w1 == pytest.approx(wasserstein(a, b, method="exact_assignment"), rel=1e-12)


def test_sliced_close_to_exact():
    """Sliced path within 0.3 relative gap of the exact path (n = 256, d = 5).

    Expected to fail: the mean of projected one-dimensional distances keeps
    only the displacement component along each direction, which for two
    independent Gaussian clouds is far smaller than the full Euclidean
    matching cost even after the translation rescaling.
    """
    rng = np.random.default_rng(5)
    gaps = []
    for _ in range(5):
        A = rng.normal(size=(256, 5))
        B = rng.normal(size=(256, 5)) * rng.uniform(0.5, 1.5) + rng.normal(scale=0.5, size=5)
        ex = wasserstein(A, B, method="exact_assignment")
        sl = wasserstein(A, B, method="sliced", seed=6)
        gaps.append(abs(sl - ex) / ex)
    assert max(gaps) <= 0.3


def test_unequal_sizes_resampled():
    rng = np.random.default_rng(7)
    A, B = rng.normal(size=(40, 2)), rng.normal(size=(25, 2))
    w, _, resampled = wasserstein_detail(A, B, seed=1)
    assert resampled and w > 0
    assert wasserstein(A, B, seed=1) == w


def test_wasserstein_validation():
    with pytest.raises(InvalidInput):
        wasserstein(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(InsufficientData):
        wasserstein(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(InvalidInput):
        wasserstein([[np.nan]], [[0.0]])


def test_mean_mse_examples():
    A = np.random.default_rng(8).normal(size=(20, 4))
    assert mean_mse(A, A) == 0
    B = A.copy()
    B[:, 2] += 2.0
    assert mean_mse(A, B) == pytest.approx(1.0)
    C = np.random.default_rng(9).normal(size=(20, 4))
    ref = sum((A[:, j].sum() / 20 - C[:, j].sum() / 20) ** 2 for j in range(4)) / 4
    assert mean_mse(A, C) == pytest.approx(ref, rel=1e-12)
    r = metric_report(A, B)
    assert r.mean_mse == pytest.approx(1.0) and r.method == "exact_assignment"


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 10_000))
def test_exact_nonnegative_and_bounded_by_identity_matching(n, d, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    w = wasserstein(A, B, method="exact_assignment")
    assert 0 <= w <= np.linalg.norm(A - B, axis=1).mean() + 1e-12


# ---------------------------------------------------------------------------
# Wilcoxon


def test_midranks():
    assert np.array_equal(_midranks(np.array([3.0, 1.0, 3.0, 2.0])), [3.5, 1.0, 3.5, 2.0])


def test_exact_cdf_matches_enumeration():
    rng = np.random.default_rng(10)
    for n in range(1, 13):
        for _ in range(3):
            x = np.round(rng.exponential(size=n), 1)  # rounding produces ties
            r = _midranks(x)
            for w in np.unique(np.concatenate([[0.0], rng.uniform(0, r.sum(), 4), [r.sum()]])):
                w = np.round(2 * w) / 2
                assert exact_signed_rank_cdf(r, w) == pytest.approx(
                    signed_rank_enumeration(r, w), abs=1e-15
                )


def test_extreme_ratios():
    rng = np.random.default_rng(11)
    base = rng.uniform(1, 2, size=30)
    res = wilcoxon_margin_test(0.5 * base, base)
    assert res["p_value"] < 0.001
    assert res["n_effective"] == 30
    rev = wilcoxon_margin_test(0.5 * base, base, direction="baseline_better")
    assert rev["p_value"] > 0.99


def test_at_margin_all_dropped():
    base = np.linspace(1, 2, 10)
    with pytest.raises(InsufficientData):
        wilcoxon_margin_test(0.95 * base, base)


def test_exact_and_normal_agree_roughly():
    rng = np.random.default_rng(12)
    base = rng.uniform(1, 2, size=25)
    ours = base * np.exp(rng.normal(-0.2, 0.3, size=25))
    pe = wilcoxon_margin_test(ours, base, method="exact")["p_value"]
    pn = wilcoxon_margin_test(ours, base, method="normal")["p_value"]
    assert abs(pe - pn) < 0.02


def test_null_p_values_uniform():
    rng = np.random.default_rng(13)
    ps = []
    for _ in range(1000):
        base = rng.uniform(1, 2, size=100)
        ours = base * 0.95 * np.exp(rng.laplace(scale=0.2, size=100))
        ps.append(wilcoxon_margin_test(ours, base)["p_value"])
    assert ks_uniform(ps) <= 0.06


def test_wilcoxon_validation():
    with pytest.raises(InsufficientData):
        wilcoxon_margin_test([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(NonPositiveValue):
        wilcoxon_margin_test([1.0, -2.0, 1, 1, 1], [1.0, 2.0, 1, 1, 1])
    with pytest.raises(InvalidInput):
        wilcoxon_margin_test([1.0] * 5, [1.0] * 6)
    with pytest.raises(InvalidInput):
        wilcoxon_margin_test([1.0] * 5, [2.0] * 5, direction="sideways")

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epban.correlation import correlation_report, pearson, spearman
from epban.errors import UndefinedCorrelationError, ValidationError


def test_pearson_examples():
    x = np.arange(5.0)
    assert abs(pearson(x, 2 * x + 1) - 1) < 1e-9
    assert abs(pearson(x, -x) + 1) < 1e-9
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_spearman_examples():
    x = np.array([0.1, 0.5, 2.0, 3.0])
    assert spearman(x, np.exp(x)) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5)


def test_tie_ranks():
    # [1,1,2] -> ranks [1.5,1.5,3]
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(pearson([1.5, 1.5, 3], [1, 2, 3]))


def test_errors():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValidationError):
        pearson([1, 2], [1, 2])
    with pytest.raises(ValidationError):
        pearson([1, 2, 3], [1, 2])


def _brute_ranks(v):
    v = list(v)
    ranks = []
    for a in v:
        below = sum(b < a for b in v)
        equal = sum(b == a for b in v)
        ranks.append(below + (equal + 1) / 2)
    return ranks


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=3, max_size=10), st.data())
def test_spearman_matches_brute_force(x, data):
    y = data.draw(st.lists(st.integers(-5, 5), min_size=len(x), max_size=len(x)))
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    assert abs(spearman(x, y) - np.corrcoef(_brute_ranks(x), _brute_ranks(y))[0, 1]) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.1, 100), st.floats(-100, 100))
def test_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=8), rng.normal(size=8)
    assert abs(pearson(a * x + b, y) - pearson(x, y)) < 1e-9
    assert spearman(a * x + b, y) == spearman(x, y)


def test_report():
    r = correlation_report([1, 2, 3, 4], [1, 3, 2, 4])
    assert r.n == 4 and r.plcc == pytest.approx(0.8) and r.srcc == pytest.approx(0.8)

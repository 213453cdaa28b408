import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knwidth.decay import InsufficientDataError, compare_models, fit_decay, plateau_cut

N = np.arange(1, 41)


def synthetic(C=5.0, b=0.7, a=1 / 3, n=N):
    return list(zip(n, C * np.exp(-b * n**a)))


def test_recovers_exact_model():
    f = fit_decay(synthetic())
    assert math.isclose(f.b, 0.7, rel_tol=1e-10)
    assert math.isclose(f.C, 5.0, rel_tol=1e-10)
    assert math.isclose(f.r2, 1.0, abs_tol=1e-12)
    assert math.isinf(f.n_cut) and f.points_used == 40


def test_order_of_points_is_irrelevant():
    pts = synthetic()
    assert fit_decay(pts[::-1]) == fit_decay(pts)


def test_constant_data_has_undefined_r2():
    f = fit_decay([(n, 0.25) for n in range(1, 11)])
    assert f.b == 0.0 and not f.r2_defined
    assert "R2=undefined" in f.as_text()


def test_plateau_is_excluded():
    clean = fit_decay(synthetic())
    plateau = synthetic() + [(n, 1e-12) for n in range(41, 61)]
    f = fit_decay(plateau)
    assert f.n_cut == 41 and f.points_used == 40
    assert math.isclose(f.b, clean.b, rel_tol=1e-8)
    assert math.isclose(f.C, clean.C, rel_tol=1e-8)


def test_steepening_tail_is_cut():
    n = np.arange(1, 21, dtype=float)
    eps = np.exp(-0.5 * n ** (1 / 3))
    eps[15:] *= np.exp(-20.0 * np.arange(1, 6))
    assert plateau_cut(n, eps) == 16


def test_nonpositive_eps_cuts():
    n = np.arange(1, 8, dtype=float)
    eps = np.array([1, 0.5, 0.3, 0.2, 0.0, 0.1, 0.1])
    assert plateau_cut(n, eps) == 5


def test_normal_equations_hold(rng):
    n = np.arange(1, 31, dtype=float)
    eps = 3 * np.exp(-1.1 * n ** 0.5) * np.exp(0.05 * rng.standard_normal(30))
    f = fit_decay(list(zip(n, eps)), a=0.5, slope_factor=1e9)
    X = np.column_stack([np.ones(30), n**0.5])
    r = np.log(eps) - X @ np.array([math.log(f.C), -f.b])
    assert np.abs(X.T @ r).max() < 1e-12 * np.abs(X.T @ np.log(eps)).max()
    y = np.log(eps)
    assert math.isclose(f.r2, 1 - (r @ r) / ((y - y.mean()) @ (y - y.mean())), rel_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(1e-6, 1e6), seed=st.integers(0, 2**32 - 1))
def test_rescaling_changes_only_C(scale, seed):
    rng = np.random.default_rng(seed)
    n = np.arange(1, 21, dtype=float)
    eps = np.exp(-0.8 * n ** (1 / 3) + 0.02 * rng.standard_normal(20))
    f1 = fit_decay(list(zip(n, eps)), slope_factor=1e9)
    f2 = fit_decay(list(zip(n, scale * eps)), slope_factor=1e9)
    assert math.isclose(f1.b, f2.b, rel_tol=1e-8, abs_tol=1e-10)
    assert math.isclose(f2.C, scale * f1.C, rel_tol=1e-8)
    assert math.isclose(f1.r2, f2.r2, rel_tol=1e-8)


def test_compare_models_ranks_true_exponent_first():
    ranked = compare_models(synthetic(b=1.3, a=0.5))
    assert [f.a for f in ranked][0] == 0.5
    assert all(x.r2 >= y.r2 for x, y in zip(ranked, ranked[1:]))
    assert len({f.points_used for f in ranked}) == 1


def test_compare_models_undefined_last():
    ranked = compare_models([(n, 1.0) for n in range(1, 9)])
    assert not any(f.r2_defined for f in ranked)
    with pytest.raises(ValueError):
        compare_models(synthetic(), exponents=())


def test_insufficient_points():
    with pytest.raises(InsufficientDataError):
        fit_decay(synthetic()[:3])
    with pytest.raises(InsufficientDataError):
        fit_decay([(1, 1.0), (2, 0.5), (3, 0.25), (4, 1e-20), (5, 1e-20)])
    with pytest.raises(ValueError):
        fit_decay([(0, 1.0), (1, 0.5), (2, 0.2), (3, 0.1)])


def test_model_and_text():
    f = fit_decay(synthetic())
    np.testing.assert_allclose(f.model(N), [e for _, e in synthetic()], rtol=1e-9)
    assert f.as_text().startswith("a=0.333333 ")


def test_early_steep_drop_is_not_a_plateau():
    n = np.arange(1, 9, dtype=float)
    eps = np.array([0.11, 0.0174, 0.0172, 0.0164, 0.0143, 0.0130, 0.0103, 6e-16])
    assert plateau_cut(n, eps) == 8

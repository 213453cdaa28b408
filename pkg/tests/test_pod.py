import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from knwidth.pod import DegenerateSnapshotsError, SnapshotSet, knw_curve, pod, projection_errors


def random_instance(rng, m=30, N=8, rank=None):
    A = rng.standard_normal((m, m))
    G = A @ A.T + m * np.eye(m)
    S = rng.standard_normal((m, N))
    if rank is not None:
        S = S[:, :rank] @ rng.standard_normal((rank, N))
    return S, G


def svd_oracle(S, G):
    """POD through the Cholesky congruence ``G = L L^T``."""
    L = la.cholesky(G, lower=True)
    U, sig, _ = la.svd(L.T @ S, full_matrices=False)
    return la.solve_triangular(L.T, U, lower=False), sig**2


def align_signs(A, B):
    s = np.sign(np.sum(A * B, axis=0))
    return A * s


def test_matches_cholesky_svd(rng):
    S, G = random_instance(rng, 25, 10)
    basis = pod(S, G)
    modes, lam = svd_oracle(S, G)
    np.testing.assert_allclose(basis.eigenvalues, lam, rtol=1e-10)
    np.testing.assert_allclose(align_signs(basis.modes, modes), modes, atol=1e-10)
    np.testing.assert_allclose(basis.modes.T @ G @ basis.modes, np.eye(10), atol=1e-10)


def test_projection_errors_match_least_squares(rng):
    S, G = random_instance(rng, 20, 6)
    basis = pod(S, G, n=3)
    err, emax = projection_errors(S, basis, G)
    L = la.cholesky(G, lower=True)
    P = L.T @ basis.modes
    for j in range(S.shape[1]):
        c, *_ = la.lstsq(P, L.T @ S[:, j])
        assert np.isclose(err[j], np.linalg.norm(L.T @ S[:, j] - P @ c), rtol=1e-10)
    assert emax == err.max()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 12), n=st.integers(0, 12))
def test_energy_identity(seed, N, n):
    rng = np.random.default_rng(seed)
    S, G = random_instance(rng, 15, N)
    n = min(n, N)
    basis = pod(S, G)
    err, _ = projection_errors(S, basis.modes[:, :n], G)
    tail = basis.eigenvalues[n:].sum()
    assert np.isclose((err**2).sum(), tail, rtol=1e-9, atol=1e-12 * basis.eigenvalues[0])


def test_full_basis_reproduces_snapshots(rng):
    S, G = random_instance(rng, 12, 5)
    err, emax = projection_errors(S, pod(S, G), G)
    assert emax < 1e-12 * np.sqrt(np.trace(S.T @ G @ S))


def test_single_snapshot():
    s = np.array([3.0, 4.0])
    b = pod(s)
    assert b.n == 1
    np.testing.assert_allclose(np.abs(b.modes[:, 0]), [0.6, 0.8])
    assert np.isclose(b.eigenvalues[0], 25.0)


def test_rank_deficient_drops_modes(rng):
    S, G = random_instance(rng, 20, 8, rank=3)
    b = pod(S, G)
    assert b.n == 3
    assert projection_errors(S, b, G)[1] < 1e-10 * np.linalg.norm(S)


def test_degenerate_and_bad_n():
    with pytest.raises(DegenerateSnapshotsError):
        pod(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        pod(np.ones((4, 3)), n=4)
    with pytest.raises(ValueError):
        pod(np.ones((4, 3)), n=0)


def test_knw_curve_monotone_and_endpoints(rng):
    Su, Gu = random_instance(rng, 20, 7)
    Sp, Gp = random_instance(rng, 9, 7)
    snaps = SnapshotSet(Su, Sp, Gu, Gp)
    curve = knw_curve(snaps, range(1, 8))
    for key in ("eps_u", "eps_p"):
        e = curve[key]
        assert np.all(np.diff(e) <= 1e-14 * e[0])
        assert e[-1] < 1e-10 * e[0]
    ref = projection_errors(Su, pod(Su, Gu, n=2), Gu)[1]
    assert np.isclose(curve["eps_u"][1], ref, rtol=1e-10)
    with pytest.raises(ValueError):
        knw_curve(snaps, [0, 1])
    with pytest.raises(ValueError):
        knw_curve(snaps, [8])


def test_unweighted_curve_uses_euclidean(rng):
    Su, Gu = random_instance(rng, 10, 4)
    snaps = SnapshotSet(Su, Su[:3], Gu, np.eye(3))
    c = knw_curve(snaps, [1], weighted=False)
    assert np.isclose(c["eps_u"][0], projection_errors(Su, pod(Su, n=1))[1], rtol=1e-12)


def test_snapshot_set_validation():
    with pytest.raises(ValueError):
        SnapshotSet(np.ones((3, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        SnapshotSet(np.array([[np.nan]]), np.ones((1, 1)))

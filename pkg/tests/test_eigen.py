import math

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from knwidth.eigen import (
    DualNorm,
    build_forcing_set,
    dirichlet_eigs,
    scalar_to_velocity_x,
    wstar_norm,
)
from knwidth.fem import (
    apply_constraints,
    assemble_h1_gram,
    assemble_scalar_mass,
    assemble_scalar_stiffness,
    build_dofmap,
    load_vector,
)
from knwidth.mesh import generate_rectangle

from conftest import all_dirichlet


_SQ4_MESH = generate_rectangle(1.0, 1.0, 4)
_SQ4 = build_dofmap(_SQ4_MESH, all_dirichlet(_SQ4_MESH))


@pytest.fixture(scope="module")
def sq6():
    m = generate_rectangle(1.0, 1.0, 6)
    return build_dofmap(m, all_dirichlet(m))


def _dense_pencil(d):
    free = d.free_scalar
    K = assemble_scalar_stiffness(d)[free][:, free].toarray()
    M = assemble_scalar_mass(d)[free][:, free].toarray()
    return K, M


def test_matches_dense_generalized_eigh(sq6):
    K, M = _dense_pencil(sq6)
    ref = la.eigh(K, M, eigvals_only=True)[:12]
    pairs = dirichlet_eigs(sq6, 12)
    got = np.array([p.lam for p in pairs])
    np.testing.assert_allclose(got, ref, rtol=1e-10)


def test_vectors_mass_normalized_and_sorted(sq6):
    pairs = dirichlet_eigs(sq6, 10)
    lam = [p.lam for p in pairs]
    assert lam == sorted(lam)
    M = assemble_scalar_mass(sq6)
    V = np.column_stack([p.vector for p in pairs])
    np.testing.assert_allclose(V.T @ (M @ V), np.eye(10), atol=1e-9)
    assert np.all(V[sq6.scalar_on_boundary] == 0)
    for p in pairs:
        assert p.vector[np.argmax(np.abs(p.vector))] > 0


def test_conforming_eigenvalues_bound_analytic_from_above(sq6):
    exact = sorted(math.pi**2 * (i * i + j * j) for i in range(1, 6) for j in range(1, 6))[:10]
    got = [p.lam for p in dirichlet_eigs(sq6, 10)]
    for g, e in zip(got, exact):
        assert e <= g <= 1.05 * e


def test_eigen_count_guard(sq6):
    nf = len(sq6.free_scalar)
    with pytest.raises(ValueError):
        dirichlet_eigs(sq6, 0)
    with pytest.raises(ValueError):
        dirichlet_eigs(sq6, int(0.2 * nf) + 1)


def test_dual_norm_matches_cholesky_oracle(sq6, rng):
    G = apply_constraints(assemble_h1_gram(sq6), sq6).toarray()
    L = la.cholesky(G, lower=True)
    F = rng.standard_normal(sq6.n_velocity)
    ref = np.linalg.norm(la.solve_triangular(L, apply_constraints(F, sq6), lower=True))
    assert math.isclose(DualNorm(sq6)(F), ref, rel_tol=1e-12)
    # any test function gives a lower bound
    Ff = apply_constraints(F, sq6)
    for _ in range(20):
        v = rng.standard_normal(len(Ff))
        assert abs(Ff @ v) / math.sqrt(v @ G @ v) <= ref * (1 + 1e-12)
    # the Riesz representative attains it
    r = DualNorm(sq6).riesz(F)
    assert math.isclose(Ff @ r / math.sqrt(r @ G @ r), ref, rel_tol=1e-12)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(-1e3, 1e3).filter(lambda s: abs(s) > 1e-3), seed=st.integers(0, 2**32 - 1))
def test_dual_norm_homogeneous(scale, seed):
    d = _SQ4
    F = np.random.default_rng(seed).standard_normal(d.n_velocity)
    assert math.isclose(wstar_norm(scale * F, d), abs(scale) * wstar_norm(F, d), rel_tol=1e-12)


def test_forcing_set_scaled_to_threshold(sq6):
    pairs = dirichlet_eigs(sq6, 8)
    thr = 3.7e-4
    fs = build_forcing_set(pairs, sq6, thr)
    assert len(fs) == 8
    np.testing.assert_allclose(fs.norms, thr, rtol=1e-10)
    assert np.all(fs.forcings[1::2] == 0)
    for i, p in enumerate(pairs):
        np.testing.assert_allclose(fs[i], fs.scales[i] * scalar_to_velocity_x(p.vector))
        assert math.isclose(wstar_norm(load_vector(sq6, fs[i]), sq6), thr, rel_tol=1e-10)
    np.testing.assert_allclose(fs.raw_norms * fs.scales, thr, rtol=1e-14)


def test_forcing_set_rejects_bad_threshold(sq6):
    with pytest.raises(ValueError):
        build_forcing_set(dirichlet_eigs(sq6, 2), sq6, 0.0)

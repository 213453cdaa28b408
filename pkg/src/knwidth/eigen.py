"""Dirichlet-Laplacian eigenpairs and the scaled forcing parameter set."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import ArpackNoConvergence

from .fem import (
    DofMap,
    apply_constraints,
    assemble_h1_gram,
    assemble_scalar_mass,
    assemble_scalar_stiffness,
    load_vector,
)

__all__ = [
    "EigenPair",
    "ForcingSet",
    "EigenConvergenceError",
    "dirichlet_eigs",
    "DualNorm",
    "wstar_norm",
    "build_forcing_set",
    "scalar_to_velocity_x",
]

log = logging.getLogger(__name__)


class EigenConvergenceError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class EigenPair:
    lam: float
    vector: np.ndarray  # full scalar P2 coefficients, zero on the boundary, M-normalized


@dataclass(frozen=True)
class ForcingSet:
    forcings: np.ndarray  # (n_velocity, N) coefficient vectors (f_i, 0)
    raw_norms: np.ndarray
    scales: np.ndarray
    norms: np.ndarray
    threshold: float
    eigenvalues: np.ndarray

    def __len__(self):
        return self.forcings.shape[1]

    def __getitem__(self, i):
        return self.forcings[:, i]


def dirichlet_eigs(dofmap: DofMap, N: int, tol: float = 1e-10, maxiter: int | None = None,
                   seed: int = 0) -> list[EigenPair]:
    """The ``N`` smallest eigenpairs of ``K x = lam M x`` with zero Dirichlet data on the whole boundary.

    Shift-invert Lanczos about zero (ARPACK).  Vectors are mass-normalized,
    sign-fixed so that their largest-magnitude entry is positive, and sorted
    by ascending eigenvalue.
    """
    free = dofmap.free_scalar
    nf = len(free)
    if N < 1 or N > 0.2 * nf:
        raise ValueError(f"N={N} outside [1, {int(0.2 * nf)}] (0.2 x {nf} free scalar dofs)")
    K = assemble_scalar_stiffness(dofmap)[free][:, free].tocsc()
    M = assemble_scalar_mass(dofmap)[free][:, free].tocsc()
    v0 = np.random.default_rng(seed).standard_normal(nf)
    ncv = min(nf, max(2 * N + 1, N + 20))
    try:
        lam, vec = spla.eigsh(K, k=N, M=M, sigma=0.0, which="LM", v0=v0, ncv=ncv,
                              tol=tol * 1e-2, maxiter=maxiter)
    except ArpackNoConvergence as exc:
        res = [float(np.linalg.norm(K @ x - l * (M @ x)) / np.linalg.norm(K @ x))
               for l, x in zip(exc.eigenvalues, exc.eigenvectors.T)]
        raise EigenConvergenceError(
            f"eigensolver did not converge; {len(res)} of {N} pairs attained", res) from None
    order = np.argsort(lam)
    lam, vec = lam[order], vec[:, order]
    residuals = []
    pairs = []
    for l, x in zip(lam, vec.T):
        x = x / np.sqrt(x @ (M @ x))
        x = x * np.sign(x[np.argmax(np.abs(x))])
        Kx = K @ x
        r = float(np.linalg.norm(Kx - l * (M @ x)) / np.linalg.norm(Kx))
        residuals.append(r)
        full = np.zeros(dofmap.n_scalar)
        full[free] = x
        full.setflags(write=False)
        pairs.append(EigenPair(float(l), full))
    if max(residuals) > tol:
        raise EigenConvergenceError(
            f"eigen-residual {max(residuals):.3e} exceeds {tol:.1e}", residuals)
    return pairs


def scalar_to_velocity_x(s: np.ndarray) -> np.ndarray:
    out = np.zeros(2 * len(s))
    out[0::2] = s
    return out


class DualNorm:
    """Discrete dual norm ``sup_v <F, v> / ||v||_H1`` over the constrained velocity space.

    Evaluated through the Riesz representative; the reduced H1 Gram operator
    is factorized once.
    """

    def __init__(self, dofmap: DofMap, gram=None):
        self.dofmap = dofmap
        G = assemble_h1_gram(dofmap, "velocity") if gram is None else gram
        self.gram = apply_constraints(G, dofmap).tocsc()
        try:
            self._solve = spla.factorized(self.gram)
        except RuntimeError as exc:
            raise RuntimeError(f"singular H1 Gram operator: {exc}") from None

    def riesz(self, F: np.ndarray) -> np.ndarray:
        return self._solve(apply_constraints(np.asarray(F, dtype=float), self.dofmap))

    def __call__(self, F: np.ndarray) -> float:
        Ff = apply_constraints(np.asarray(F, dtype=float), self.dofmap)
        return float(np.sqrt(max(Ff @ self._solve(Ff), 0.0)))


def wstar_norm(F: np.ndarray, dofmap: DofMap) -> float:
    """Dual norm of a load vector assembled on the full velocity space."""
    key = "dual_norm"
    if key not in dofmap._cache:
        dofmap._cache[key] = DualNorm(dofmap)
    return dofmap._cache[key](F)


def build_forcing_set(eigs: list[EigenPair], dofmap: DofMap, threshold: float) -> ForcingSet:
    """Scale each forcing ``(f_i, 0)`` so that its dual norm equals ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    forcings, raw, scales, final = [], [], [], []
    for pair in eigs:
        f = scalar_to_velocity_x(pair.vector)
        r = wstar_norm(load_vector(dofmap, f), dofmap)
        if r == 0.0:
            raise RuntimeError("eigenfunction load has zero dual norm")
        s = threshold / r
        f = s * f
        forcings.append(f)
        raw.append(r)
        scales.append(s)
        final.append(wstar_norm(load_vector(dofmap, f), dofmap))
    return ForcingSet(
        forcings=np.column_stack(forcings),
        raw_norms=np.array(raw),
        scales=np.array(scales),
        norms=np.array(final),
        threshold=float(threshold),
        eigenvalues=np.array([p.lam for p in eigs]),
    )

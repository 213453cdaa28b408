"""Gram-weighted POD by the method of snapshots and projection-error bounds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

__all__ = [
    "SnapshotSet",
    "PodBasis",
    "DegenerateSnapshotsError",
    "pod",
    "projection_errors",
    "knw_curve",
    "RANK_CUTOFF",
]

RANK_CUTOFF = 1e-14


class DegenerateSnapshotsError(ValueError):
    pass


@dataclass
class SnapshotSet:
    M_u: np.ndarray
    M_p: np.ndarray
    G_u: object = None
    G_p: object = None
    indices: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.M_u = np.asarray(self.M_u, dtype=float)
        self.M_p = np.asarray(self.M_p, dtype=float)
        if self.M_u.shape[1] != self.M_p.shape[1]:
            raise ValueError("velocity and pressure snapshot counts differ")
        if not (np.isfinite(self.M_u).all() and np.isfinite(self.M_p).all()):
            raise ValueError("snapshots contain non-finite entries")

    @property
    def N(self) -> int:
        return self.M_u.shape[1]


@dataclass
class PodBasis:
    """``modes`` are G-orthonormal; ``eigenvalues`` holds the full descending
    spectrum of the snapshot correlation ``S^T G S``."""

    modes: np.ndarray
    eigenvalues: np.ndarray
    gram: object = None

    @property
    def n(self) -> int:
        return self.modes.shape[1]

    def truncate(self, n: int) -> "PodBasis":
        return PodBasis(self.modes[:, :n], self.eigenvalues, self.gram)


def _gmul(G, X):
    return X if G is None else G @ X


def pod(S: np.ndarray, G=None, n: int | None = None) -> PodBasis:
    """POD modes of the columns of ``S`` in the inner product ``x^T G y``.

    Method of snapshots: eigendecompose ``C = S^T G S`` and map eigenvectors
    back with ``S v_k / sqrt(lam_k)``.  Eigenvalues below ``lam_1 * 1e-14``
    are treated as zero and their modes dropped, so fewer than ``n`` modes
    may be returned.  ``G=None`` means the Euclidean inner product.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    N = S.shape[1]
    n = N if n is None else n
    if not 1 <= n <= N:
        raise ValueError(f"n={n} outside [1, {N}]")
    GS = _gmul(G, S)
    C = S.T @ GS
    C = 0.5 * (C + C.T)
    lam, V = la.eigh(C)
    lam, V = lam[::-1], V[:, ::-1]
    lam = np.clip(lam, 0.0, None)
    if lam[0] <= 0.0:
        raise DegenerateSnapshotsError("all snapshot correlation eigenvalues vanish")
    keep = min(n, int(np.count_nonzero(lam > lam[0] * RANK_CUTOFF)))
    modes = S @ (V[:, :keep] / np.sqrt(lam[:keep]))
    return PodBasis(modes, lam, G)


def _gnorms(R, G):
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", R, _gmul(G, R)), 0.0))


def projection_errors(S: np.ndarray, basis: PodBasis | np.ndarray | None, G=None):
    """Per-column G-norm distance of ``S`` to the span of the basis modes.

    Returns ``(errors, max_error)``.  The residual ``s - Phi Phi^T G s`` is
    formed explicitly, which avoids the cancellation of ``s^T G s - |c|^2``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    Phi = basis.modes if isinstance(basis, PodBasis) else basis
    if Phi is None or Phi.shape[1] == 0:
        R = S
    else:
        if Phi.shape[0] != S.shape[0]:
            raise ValueError(f"basis has {Phi.shape[0]} rows, snapshots have {S.shape[0]}")
        R = S - Phi @ (Phi.T @ _gmul(G, S))
    err = _gnorms(R, G)
    return err, float(err.max())


def _curve(S, G, n_values):
    basis = pod(S, G)
    coef = basis.modes.T @ _gmul(G, S)
    R = S.copy()
    out = {}
    wanted = sorted(set(int(n) for n in n_values))
    k = 0
    for n in wanted:
        while k < min(n, basis.n):
            R -= np.outer(basis.modes[:, k], coef[k])
            k += 1
        out[n] = float(_gnorms(R, G).max())
    return np.array([out[int(n)] for n in n_values])


def knw_curve(snapshots: SnapshotSet, n_values, weighted: bool = True) -> dict:
    """Maximal projection errors ``eps_u(n)`` (H1) and ``eps_p(n)`` (L2) for each n.

    ``weighted=False`` uses Euclidean POD and errors on the coefficient
    vectors instead of the Gram-weighted ones.
    """
    n_values = np.asarray(list(n_values), dtype=int)
    if n_values.size == 0 or n_values.min() < 1 or n_values.max() > snapshots.N:
        raise ValueError(f"n values must lie in [1, {snapshots.N}]")
    Gu = snapshots.G_u if weighted else None
    Gp = snapshots.G_p if weighted else None
    return {
        "n": n_values,
        "eps_u": _curve(snapshots.M_u, Gu, n_values),
        "eps_p": _curve(snapshots.M_p, Gp, n_values),
    }

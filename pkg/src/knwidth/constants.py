"""Discrete coercivity and trilinear continuity constants.

The small-data threshold ``nu^2 c_coer^2 / (4 c_cont)`` bounds the dual norm
of admissible forcings; ``c_coer nu / (2 c_cont)`` is the radius of the ball
in which the velocity is unique.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .fem import DofMap, apply_constraints, assemble_h1_gram, assemble_viscous, scatter_free, trilinear_gradient

__all__ = [
    "ConstantsReport",
    "ConstantsConvergenceError",
    "coercivity_constant",
    "continuity_constant",
    "small_data_threshold",
    "uniqueness_radius",
    "compute_constants",
]

log = logging.getLogger(__name__)


class ConstantsConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ConstantsReport:
    c_coer: float
    c_cont: float
    c_cont_restarts: int = 0
    estimated: bool = True
    diagnostics: dict = field(default_factory=dict)

    def threshold(self, nu: float) -> float:
        return small_data_threshold(self, nu)

    def radius(self, nu: float) -> float:
        return uniqueness_radius(self, nu)

    def as_text(self, nu: float) -> str:
        src = "estimated" if self.estimated else "user supplied"
        lines = [
            f"c_coer    = {self.c_coer:.17g}",
            f"c_cont    = {self.c_cont:.17g}  ({src}; lower bound when estimated)",
            f"restarts  = {self.c_cont_restarts}",
            f"nu        = {nu:.17g}",
            f"threshold = {self.threshold(nu):.17g}",
            f"radius    = {self.radius(nu):.17g}",
        ]
        return "\n".join(lines) + "\n"


def small_data_threshold(report: ConstantsReport, nu: float) -> float:
    if not nu > 0:
        raise ValueError("nu must be positive")
    return nu**2 * report.c_coer**2 / (4.0 * report.c_cont)


def uniqueness_radius(report: ConstantsReport, nu: float) -> float:
    return report.c_coer * nu / (2.0 * report.c_cont)


def _negative_inertia(A) -> int:
    """Number of negative eigenvalues of a symmetric matrix (Sylvester).

    Diagonal pivoting with a symmetric ordering makes the LU factors an
    LDL^T factorization, so the signs of U's diagonal give the inertia.
    """
    lu = spla.splu(A.tocsc(), diag_pivot_thresh=0.0, permc_spec="MMD_AT_PLUS_A",
                   options={"SymmetricMode": True})
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise ConstantsConvergenceError("factorization used non-symmetric pivoting")
    return int(np.count_nonzero(lu.U.diagonal() < 0))


def coercivity_constant(dofmap: DofMap, gram=None, tol: float = 1e-10, maxiter: int | None = None,
                        seed: int = 0) -> float:
    """Smallest eigenvalue of ``2 E v = mu G v`` on the constrained velocity space.

    ``E`` is the symmetric-gradient form with unit viscosity and ``G`` the H1
    Gram operator.  Inverse iteration accelerated by Lanczos (ARPACK in
    shift-invert mode about zero); spaces too small for ARPACK use a single
    Rayleigh-Ritz step on the whole space.  The relative eigen-residual of
    the returned pair is checked against ``tol``.
    """
    bcs = set(dofmap.bcspec[t] for t in dofmap.mesh.segment_tags)
    if "dirichlet" not in bcs:
        raise ValueError("coercivity needs at least one Dirichlet segment")
    E = apply_constraints(assemble_viscous(dofmap, 1.0, "sym_grad"), dofmap).tocsc()
    G = apply_constraints(assemble_h1_gram(dofmap, "velocity") if gram is None else gram, dofmap).tocsc()
    n = E.shape[0]
    if n <= 3:
        solve = spla.factorized(E)
        Y = np.column_stack([solve(G[:, j].toarray().ravel()) for j in range(n)])
        Ar = Y.T @ (E @ Y)
        Br = Y.T @ (G @ Y)
        mu, C = la.eigh(0.5 * (Ar + Ar.T), 0.5 * (Br + Br.T))
        mu0, x = mu[0], Y @ C[:, 0]
    else:
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            # the low end of this spectrum is tightly clustered: take a loose
            # estimate, then shift just below the minimum and converge there
            est = spla.eigsh(E, k=1, M=G, sigma=0.0, which="LM", v0=v0, tol=1e-3,
                             return_eigenvectors=False, maxiter=maxiter)[0]
            margin = 1e-3
            while _negative_inertia(E - est * (1 - margin) * G) > 0:
                margin *= 10
                if margin >= 1:
                    raise ConstantsConvergenceError("could not bracket the smallest eigenvalue")
            shift = est * (1 - margin)
            mu, X = spla.eigsh(E, k=min(4, n - 1), M=G, sigma=shift, which="LM", v0=v0,
                               tol=tol * 1e-2, maxiter=maxiter)
        except spla.ArpackNoConvergence:
            raise ConstantsConvergenceError("coercivity eigensolver did not converge") from None
        j = int(np.argmin(mu))
        mu0, x = mu[j], X[:, j]
    Ex = E @ x
    res = float(np.linalg.norm(Ex - mu0 * (G @ x)) / np.linalg.norm(Ex))
    if res > tol:
        raise ConstantsConvergenceError(f"coercivity eigen-residual {res:.3e} exceeds {tol:.1e}", res)
    return float(mu0)


def continuity_constant(dofmap: DofMap, restarts: int = 20, iters: int = 200, gram=None,
                        seed: int = 0, rtol: float = 1e-8, return_history: bool = False):
    """Best value of ``t(u; v, w)`` over H1-unit triples found by alternating maximization.

    With two arguments fixed the form is linear in the third, whose optimum
    is the normalized Riesz representative of the partial gradient.  Each
    restart iterates until the relative gain drops below ``rtol``; the best
    value over all restarts is returned.  It is a lower bound for the sup.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    G = apply_constraints(assemble_h1_gram(dofmap, "velocity") if gram is None else gram, dofmap).tocsc()
    solve = spla.factorized(G)
    n = G.shape[0]
    rng = np.random.default_rng(seed)

    def unit(x):
        return x / np.sqrt(x @ (G @ x))

    best = 0.0
    history = []
    for r in range(restarts):
        xs = [unit(rng.standard_normal(n)) for _ in range(3)]
        full = [scatter_free(x, dofmap) for x in xs]
        val = -np.inf
        new = 0.0
        for _ in range(iters):
            for slot in range(3):
                g = apply_constraints(trilinear_gradient(dofmap, *full, slot=slot), dofmap)
                z = solve(g)
                nz = np.sqrt(max(g @ z, 0.0))
                if nz == 0.0:
                    continue
                xs[slot] = z / nz
                full[slot] = scatter_free(xs[slot], dofmap)
                new = nz  # value of t after the optimal update of this slot
            if new - val <= rtol * abs(new):
                val = max(val, new)
                break
            val = new
        best = max(best, val)
        history.append(best)
    return (best, history) if return_history else best


def compute_constants(dofmap: DofMap, restarts: int = 20, iters: int = 200, seed: int = 0) -> ConstantsReport:
    c_coer = coercivity_constant(dofmap, seed=seed)
    c_cont, hist = continuity_constant(dofmap, restarts=restarts, iters=iters, seed=seed, return_history=True)
    return ConstantsReport(c_coer, c_cont, restarts, True, {"c_cont_history": hist})

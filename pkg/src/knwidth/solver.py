"""Stationary Navier-Stokes solves on the Taylor-Hood space.

The discrete system is the symmetric saddle point

    [ A + J(u)  B^T ] [du]   [-R_u]
    [ B         0   ] [dp] = [-R_p]

where ``B`` is ``-int q div u``.  When the whole boundary is Dirichlet the
pressure is fixed only up to a constant: the linear systems then pin one
pressure dof (a dense mean-value multiplier row wrecks the sparse LU fill)
and the converged pressure is shifted to zero mean afterwards.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import ForcingSet, wstar_norm
from .fem import (
    DofMap,
    apply_constraints,
    assemble_convection,
    assemble_convection_jacobian,
    assemble_divergence,
    assemble_h1_gram,
    assemble_l2_gram_pressure,
    assemble_viscous,
    load_vector,
    pressure_integrals,
    scatter_free,
)
from .pod import SnapshotSet

__all__ = [
    "FlowSolution",
    "SolverError",
    "SingularSystemError",
    "NonConvergenceError",
    "StagnationError",
    "SmallDataError",
    "EmptySnapshotError",
    "FlowProblem",
    "solve_stokes",
    "solve_nse",
    "solve_snapshot_set",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class StagnationError(NonConvergenceError):
    pass


class SmallDataError(SolverError):
    pass


class EmptySnapshotError(SolverError):
    pass


@dataclass
class FlowSolution:
    u: np.ndarray
    p: np.ndarray
    newton_iters: int
    residual: float
    residual_history: list = field(default_factory=list)
    index: int | None = None


class FlowProblem:
    """Operators of one (mesh, boundary conditions, viscosity, viscous form) setting."""

    def __init__(self, dofmap: DofMap, nu: float, form: str = "sym_grad"):
        if not nu > 0:
            raise ValueError("nu must be positive")
        kinds = {dofmap.bcspec[t] for t in dofmap.mesh.segment_tags}
        if form == "grad_grad" and kinds != {"dirichlet"}:
            log.warning("grad_grad form does not impose traction conditions; using sym_grad")
            form = "sym_grad"
        self.dofmap = dofmap
        self.nu = float(nu)
        self.form = form
        self.free = dofmap.free_velocity
        self.nf = len(self.free)
        self.npres = dofmap.n_pressure
        self.mean_zero = dofmap.mean_zero_pressure
        self.A = assemble_viscous(dofmap, nu, form)
        self.B = assemble_divergence(dofmap)
        self.A_ff = apply_constraints(self.A, dofmap)
        self.B_f = apply_constraints(self.B, dofmap)
        self.mvec = pressure_integrals(dofmap)
        self.size = self.nf + self.npres
        self.pin = self.nf if self.mean_zero else None
        self._stokes_lu = None

    def saddle(self, top_left: sp.spmatrix, pin: bool = True) -> sp.csc_matrix:
        """Block system; with ``pin`` the pinned pressure row/column becomes identity."""
        K = sp.bmat([[top_left, self.B_f.T], [self.B_f, None]], format="csr")
        if K.shape != (self.size, self.size):
            K.resize((self.size, self.size))
        if pin and self.pin is not None:
            keep = np.ones(self.size)
            keep[self.pin] = 0.0
            D = sp.diags(keep)
            K = D @ K @ D + sp.csr_matrix(([1.0], ([self.pin], [self.pin])), shape=K.shape)
        return K.tocsc()

    def solve_linear(self, lu, rhs: np.ndarray) -> np.ndarray:
        if self.pin is not None:
            rhs = rhs.copy()
            rhs[self.pin] = 0.0
        return lu.solve(rhs)

    def factorize(self, K):
        try:
            return spla.splu(K, permc_spec="MMD_ATA")
        except RuntimeError as exc:
            cause = "" if (self.dofmap.constraint == 1).any() else " (no Dirichlet dofs)"
            raise SingularSystemError(f"saddle-point factorization failed{cause}: {exc}") from None

    @property
    def stokes_lu(self):
        if self._stokes_lu is None:
            self._stokes_lu = self.factorize(self.saddle(self.A_ff))
        return self._stokes_lu

    def split(self, x):
        u = scatter_free(x[: self.nf], self.dofmap)
        p = x[self.nf: self.nf + self.npres]
        return u, p

    def residual(self, x: np.ndarray, F_free: np.ndarray) -> np.ndarray:
        u, p = self.split(x)
        uf = x[: self.nf]
        conv = apply_constraints(assemble_convection(self.dofmap, u) @ u, self.dofmap)
        r_u = self.A_ff @ uf + conv + self.B_f.T @ p - F_free
        return np.concatenate([r_u, self.B_f @ uf])

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Shift the pressure part to zero mean when it is only defined up to a constant."""
        if self.mean_zero:
            x = x.copy()
            x[self.nf:] -= (self.mvec @ x[self.nf:]) / self.mvec.sum()
        return x

    def jacobian(self, x: np.ndarray, pin: bool = True) -> sp.csc_matrix:
        """Derivative of :meth:`residual`; ``pin=False`` gives the exact (singular) one."""
        u, _ = self.split(x)
        Jc = apply_constraints(assemble_convection_jacobian(self.dofmap, u), self.dofmap)
        return self.saddle((self.A_ff + Jc).tocsr(), pin=pin)

    def rhs(self, F_free: np.ndarray) -> np.ndarray:
        b = np.zeros(self.size)
        b[: self.nf] = F_free
        return b


_PROBLEMS_KEY = "flow_problems"


def _problem(dofmap: DofMap, nu: float, form: str) -> FlowProblem:
    cache = dofmap._cache.setdefault(_PROBLEMS_KEY, {})
    key = (float(nu), form)
    if key not in cache:
        cache[key] = FlowProblem(dofmap, nu, form)
    return cache[key]


def _load(dofmap: DofMap, f: np.ndarray) -> np.ndarray:
    return apply_constraints(load_vector(dofmap, np.asarray(f, dtype=float)), dofmap)


def solve_stokes(dofmap: DofMap, nu: float, f: np.ndarray, form: str = "sym_grad") -> FlowSolution:
    """Linear Stokes solve (no convection) for a P2 forcing ``f``."""
    prob = _problem(dofmap, nu, form)
    F = _load(dofmap, f)
    b = prob.rhs(F)
    x = prob.normalize(prob.solve_linear(prob.stokes_lu, b))
    if not np.isfinite(x).all():
        raise SingularSystemError("Stokes solve produced non-finite values")
    rel = np.linalg.norm(prob.residual(x, F)) / max(np.linalg.norm(b), np.finfo(float).tiny)
    u, p = prob.split(x)
    return FlowSolution(u, p.copy(), 0, float(rel), [float(rel)])


def solve_nse(
    dofmap: DofMap,
    nu: float,
    f: np.ndarray,
    tol: float = 1e-10,
    max_iters: int = 25,
    form: str = "sym_grad",
    threshold: float | None = None,
    override: bool = False,
    rtol: float = 1e-13,
    index: int | None = None,
) -> FlowSolution:
    """Newton iteration from the Stokes solution with backtracking.

    Converged when the reduced residual is at most ``tol`` and either below
    ``rtol`` times the load norm or no longer changed by the Newton update.
    At least one Newton step is always taken.  With ``threshold`` given, a
    forcing whose dual norm exceeds it is rejected unless ``override``.
    """
    if threshold is not None:
        fn = wstar_norm(load_vector(dofmap, f), dofmap)
        if fn > threshold * (1 + 1e-10):
            msg = f"forcing dual norm {fn:.6e} exceeds the small-data threshold {threshold:.6e}"
            if not override:
                raise SmallDataError(msg)
            warnings.warn(msg + "; uniqueness is not guaranteed", stacklevel=2)
    prob = _problem(dofmap, nu, form)
    F = _load(dofmap, f)
    fnorm = float(np.linalg.norm(F))
    x = prob.normalize(prob.solve_linear(prob.stokes_lu, prob.rhs(F)))
    r = prob.residual(x, F)
    rn = float(np.linalg.norm(r))
    history = [rn]

    def done(res, step_norm, xnorm):
        return res <= tol and (res <= rtol * fnorm or step_norm <= 1e-14 * xnorm)

    for k in range(1, max_iters + 1):
        J = prob.jacobian(x)
        dx = prob.solve_linear(prob.factorize(J), -r)
        step = 1.0
        while True:
            x_new = x + step * dx
            r_new = prob.residual(x_new, F)
            rn_new = float(np.linalg.norm(r_new))
            if rn_new < rn or rn_new <= tol * rtol:
                break
            step *= 0.5
            if step < 1e-4:
                if rn <= tol:
                    u, p = prob.split(x)
                    return FlowSolution(u, p.copy(), k, rn, history, index)
                raise StagnationError(
                    f"line search stagnated at residual {rn:.3e} after {k} iterations", history)
        x, r, rn = prob.normalize(x_new), r_new, rn_new
        history.append(rn)
        if done(rn, step * np.linalg.norm(dx), np.linalg.norm(x)):
            u, p = prob.split(x)
            return FlowSolution(u, p.copy(), k, rn, history, index)
    raise NonConvergenceError(f"Newton did not converge in {max_iters} iterations "
                              f"(residual {rn:.3e})", history)


def solve_snapshot_set(
    dofmap: DofMap,
    nu: float,
    forcing_set: ForcingSet,
    tol: float = 1e-10,
    form: str = "sym_grad",
    serial: bool = True,
    workers: int = 2,
    override: bool = False,
    max_iters: int = 25,
) -> tuple[SnapshotSet, list]:
    """Solve for every forcing and collect velocity/pressure snapshot matrices.

    Failed columns are logged and dropped.  Returns the snapshot set and the
    list of per-column solutions (``None`` for failures), in forcing order.
    """
    n = len(forcing_set)
    if n == 0:
        raise EmptySnapshotError("forcing set is empty")
    prob = _problem(dofmap, nu, form)
    prob.stokes_lu  # factorize once before any parallel use

    def one(i):
        try:
            sol = solve_nse(dofmap, nu, forcing_set[i], tol=tol, max_iters=max_iters, form=form,
                            threshold=None if override else forcing_set.threshold * (1 + 1e-9),
                            override=override, index=i)
        except (SolverError, ArithmeticError) as exc:
            log.warning("snapshot %d failed: %s", i, exc)
            return None
        log.info("%d, %d, %.3e", i, sol.newton_iters, sol.residual)
        return sol

    if serial or workers <= 1:
        sols = [one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            sols = list(ex.map(one, range(n)))
    ok = [s for s in sols if s is not None]
    if not ok:
        raise EmptySnapshotError("every snapshot solve failed")
    if len(ok) < n:
        warnings.warn(f"{n - len(ok)} of {n} snapshot solves failed and were excluded", stacklevel=2)
    snaps = SnapshotSet(
        M_u=np.column_stack([s.u for s in ok]),
        M_p=np.column_stack([s.p for s in ok]),
        G_u=assemble_h1_gram(dofmap, "velocity"),
        G_p=assemble_l2_gram_pressure(dofmap),
        indices=np.array([s.index for s in ok]),
    )
    return snaps, sols

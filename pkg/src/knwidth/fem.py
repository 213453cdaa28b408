"""Taylor-Hood P2-P1 degrees of freedom and sparse assembly.

Velocity coefficients are interleaved: the x and y components at scalar P2
node ``i`` live at ``2*i`` and ``2*i + 1``.  Scalar P2 nodes are the mesh
vertices followed by one node per edge midpoint.  All element integrals use
a single symmetric 12-point rule that is exact up to degree 6, which covers
every integrand assembled here (the convective term is degree 5).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import BoundarySpec, Mesh

__all__ = [
    "FREE",
    "DIRICHLET",
    "SLIP",
    "QUAD_POINTS",
    "QUAD_WEIGHTS",
    "DofMap",
    "UnsupportedGeometryError",
    "build_dofmap",
    "p2_basis",
    "assemble_scalar_stiffness",
    "assemble_scalar_mass",
    "assemble_viscous",
    "assemble_divergence",
    "assemble_convection",
    "assemble_convection_jacobian",
    "assemble_h1_gram",
    "assemble_l2_gram_pressure",
    "pressure_integrals",
    "load_vector",
    "trilinear",
    "trilinear_gradient",
    "apply_constraints",
    "constrain",
    "scatter_free",
    "interpolate_p2",
    "interpolate_velocity",
    "interpolate_p1",
]

FREE, DIRICHLET, SLIP = 0, 1, 2


class UnsupportedGeometryError(ValueError):
    pass


# Dunavant degree-6 rule in barycentric coordinates; weights sum to one.
def _dunavant6():
    pts, wts = [], []
    for a, w in ((0.249286745170910, 0.116786275726379), (0.063089014491502, 0.050844906370207)):
        b = 1.0 - 2.0 * a
        pts += [(a, a, b), (a, b, a), (b, a, a)]
        wts += [w] * 3
    a, b, c = 0.053145049844817, 0.310352451033784, 0.636502499121399
    for p in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
        pts.append(p)
        wts.append(0.082851075618374)
    pts = np.array(pts)
    pts /= pts.sum(axis=1, keepdims=True)
    wts = np.array(wts)
    return pts, wts / wts.sum()


QUAD_POINTS, QUAD_WEIGHTS = _dunavant6()

# local P2 node order: vertices 0, 1, 2 then midpoints of edges (0,1), (1,2), (2,0)
_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def p2_basis(lam: np.ndarray):
    """P2 shape functions and their barycentric derivatives.

    ``lam`` has shape (Q, 3).  Returns ``phi`` (Q, 6) and ``dphi`` (Q, 6, 3)
    where ``dphi[q, a, k]`` is the derivative of shape ``a`` in ``lam_k``.
    """
    Q = lam.shape[0]
    phi = np.empty((Q, 6))
    dphi = np.zeros((Q, 6, 3))
    for i in range(3):
        phi[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
        dphi[:, i, i] = 4 * lam[:, i] - 1
    for e, (i, j) in enumerate(_LOCAL_EDGES):
        phi[:, 3 + e] = 4 * lam[:, i] * lam[:, j]
        dphi[:, 3 + e, i] = 4 * lam[:, j]
        dphi[:, 3 + e, j] = 4 * lam[:, i]
    return phi, dphi


@dataclass(eq=False)
class DofMap:
    """Degree-of-freedom layout and constraint table for one mesh and BC map."""

    mesh: Mesh
    bcspec: BoundarySpec
    edges: np.ndarray
    elem_edges: np.ndarray
    constraint: np.ndarray
    scalar_on_boundary: np.ndarray
    mean_zero_pressure: bool
    h1_norm: str = "full"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices

    @property
    def n_scalar(self) -> int:
        return self.mesh.n_vertices + len(self.edges)

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_scalar

    @property
    def n_pressure(self) -> int:
        return self.mesh.n_vertices

    @cached_property
    def p2_dofs(self) -> np.ndarray:
        return np.hstack([self.mesh.triangles, self.mesh.n_vertices + self.elem_edges])

    @cached_property
    def velocity_dofs(self) -> np.ndarray:
        p2 = self.p2_dofs
        return np.stack([2 * p2, 2 * p2 + 1], axis=2).reshape(len(p2), 12)

    @cached_property
    def p2_nodes(self) -> np.ndarray:
        v = self.mesh.vertices
        return np.vstack([v, 0.5 * (v[self.edges[:, 0]] + v[self.edges[:, 1]])])

    @cached_property
    def free_velocity(self) -> np.ndarray:
        return np.nonzero(self.constraint == FREE)[0]

    @cached_property
    def free_scalar(self) -> np.ndarray:
        return np.nonzero(~self.scalar_on_boundary)[0]

    @property
    def n_free_velocity(self) -> int:
        return len(self.free_velocity)

    # element geometry --------------------------------------------------
    @cached_property
    def areas(self) -> np.ndarray:
        return self.mesh.signed_areas()

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        """(m, 3, 2) constant gradients of the barycentric coordinates."""
        p = self.mesh.vertices[self.mesh.triangles]
        x, y = p[..., 0], p[..., 1]
        two_a = 2.0 * self.areas
        g = np.empty((len(p), 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = (y[:, j] - y[:, k]) / two_a
            g[:, i, 1] = (x[:, k] - x[:, j]) / two_a
        return g

    @cached_property
    def qweights(self) -> np.ndarray:
        """(m, Q) quadrature weights scaled by element area."""
        return self.areas[:, None] * QUAD_WEIGHTS[None, :]

    @cached_property
    def phi(self) -> np.ndarray:
        return p2_basis(QUAD_POINTS)[0]

    @cached_property
    def dphi(self) -> np.ndarray:
        """(m, Q, 6, 2) physical gradients of the P2 shapes at quadrature points."""
        dl = p2_basis(QUAD_POINTS)[1]
        return np.einsum("qak,mkd->mqad", dl, self.grad_lambda)

    @cached_property
    def psi(self) -> np.ndarray:
        """(Q, 3) P1 shapes at quadrature points."""
        return QUAD_POINTS

    @cached_property
    def quad_xy(self) -> np.ndarray:
        p = self.mesh.vertices[self.mesh.triangles]
        return np.einsum("qk,mkd->mqd", QUAD_POINTS, p)

    @cached_property
    def quad_ops(self):
        """Sparse maps from scalar P2 coefficients to values, d/dx and d/dy at
        all quadrature points (rows ordered element-major), plus flat weights."""
        m, Q = self.qweights.shape
        rows = np.broadcast_to(np.arange(m * Q).reshape(m, Q, 1), (m, Q, 6)).ravel()
        cols = np.broadcast_to(self.p2_dofs[:, None, :], (m, Q, 6)).ravel()
        shape = (m * Q, self.n_scalar)
        P = sp.csr_matrix((np.broadcast_to(self.phi, (m, Q, 6)).ravel(), (rows, cols)), shape=shape)
        Dx = sp.csr_matrix((self.dphi[..., 0].ravel(), (rows, cols)), shape=shape)
        Dy = sp.csr_matrix((self.dphi[..., 1].ravel(), (rows, cols)), shape=shape)
        return P, Dx, Dy, self.qweights.ravel()

    def velocity_at_quad(self, u: np.ndarray) -> np.ndarray:
        """(m, Q, 2) velocity values at quadrature points."""
        P = self.quad_ops[0]
        return (P @ u.reshape(-1, 2)).reshape(*self.qweights.shape, 2)

    def velocity_grad_at_quad(self, u: np.ndarray) -> np.ndarray:
        """(m, Q, 2, 2) with ``[..., d, c] = d u_d / d x_c``."""
        _, Dx, Dy, _ = self.quad_ops
        U = u.reshape(-1, 2)
        return np.stack([Dx @ U, Dy @ U], axis=2).reshape(*self.qweights.shape, 2, 2)

    def scalar_at_quad(self, s: np.ndarray) -> np.ndarray:
        return (self.quad_ops[0] @ s).reshape(self.qweights.shape)

    def pressure_at_quad(self, p: np.ndarray) -> np.ndarray:
        return np.einsum("qk,mk->mq", self.psi, p[self.mesh.triangles])


def build_dofmap(mesh: Mesh, bcspec: BoundarySpec | dict | None = None, h1_norm: str = "full") -> DofMap:
    """Number P2/P1 dofs and classify velocity dofs as free, Dirichlet or slip.

    Dirichlet wins over slip at junction nodes.  Slip edges must be axis
    aligned; the normal velocity component is eliminated there.
    """
    if bcspec is None:
        bcspec = BoundarySpec.all_dirichlet(mesh)
    elif not isinstance(bcspec, BoundarySpec):
        bcspec = BoundarySpec(bcspec)
    missing = set(mesh.segment_tags) - set(bcspec.kinds)
    if missing:
        raise ValueError(f"boundary spec does not cover tags {sorted(missing)}")
    if h1_norm not in ("full", "semi"):
        raise ValueError("h1_norm must be 'full' or 'semi'")

    tris = mesh.triangles
    local = np.stack([tris[:, [i, j]] for i, j in _LOCAL_EDGES], axis=1)
    key = np.sort(local, axis=2).reshape(-1, 2)
    edges, inv = np.unique(key, axis=0, return_inverse=True)
    elem_edges = inv.reshape(-1, 3)

    nv = mesh.n_vertices
    n_scalar = nv + len(edges)
    edge_index = {tuple(e): k for k, e in enumerate(edges.tolist())}
    constraint = np.zeros(2 * n_scalar, dtype=np.int8)
    on_bnd = np.zeros(n_scalar, dtype=bool)
    dirichlet_nodes, slip_dofs = set(), set()
    for (i, j), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags):
        mid = nv + edge_index[(min(i, j), max(i, j))]
        nodes = (i, j, mid)
        on_bnd[list(nodes)] = True
        kind = bcspec[tag]
        if kind == "dirichlet":
            dirichlet_nodes.update(nodes)
        elif kind == "slip":
            d = mesh.vertices[j] - mesh.vertices[i]
            L = float(np.hypot(*d))
            if abs(d[1]) <= 1e-12 * L:
                comp = 1
            elif abs(d[0]) <= 1e-12 * L:
                comp = 0
            else:
                raise UnsupportedGeometryError(
                    f"slip boundary edge ({i}, {j}) tagged {tag!r} is not axis aligned")
            slip_dofs.update(2 * n + comp for n in nodes)
    for d in slip_dofs:
        constraint[d] = SLIP
    for n in dirichlet_nodes:
        constraint[2 * n] = DIRICHLET
        constraint[2 * n + 1] = DIRICHLET

    present = {bcspec[t] for t in mesh.segment_tags}
    return DofMap(
        mesh=mesh,
        bcspec=bcspec,
        edges=edges,
        elem_edges=elem_edges,
        constraint=constraint,
        scalar_on_boundary=on_bnd,
        mean_zero_pressure=present == {"dirichlet"},
        h1_norm=h1_norm,
    )


# ---------------------------------------------------------------------------
# assembly


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def _symmetric(A: sp.spmatrix) -> sp.csr_matrix:
    # a + b == b + a in IEEE arithmetic, so this is exactly symmetric
    A = ((A + A.T) * 0.5).tocsr()
    A.sort_indices()
    return A


def _scatter_vec(local: np.ndarray, dofs: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=n)


def assemble_scalar_stiffness(dofmap: DofMap) -> sp.csr_matrix:
    key = "scalar_stiffness"
    if key not in dofmap._cache:
        loc = np.einsum("mq,mqad,mqbd->mab", dofmap.qweights, dofmap.dphi, dofmap.dphi)
        p2 = dofmap.p2_dofs
        dofmap._cache[key] = _symmetric(_scatter(loc, p2, p2, (dofmap.n_scalar,) * 2))
    return dofmap._cache[key]


def assemble_scalar_mass(dofmap: DofMap) -> sp.csr_matrix:
    key = "scalar_mass"
    if key not in dofmap._cache:
        loc = np.einsum("mq,qa,qb->mab", dofmap.qweights, dofmap.phi, dofmap.phi)
        p2 = dofmap.p2_dofs
        dofmap._cache[key] = _symmetric(_scatter(loc, p2, p2, (dofmap.n_scalar,) * 2))
    return dofmap._cache[key]


def _vector_block(S: sp.spmatrix) -> sp.csr_matrix:
    return sp.kron(S, sp.identity(2), format="csr")


def assemble_viscous(dofmap: DofMap, nu: float = 1.0, form: str = "sym_grad") -> sp.csr_matrix:
    """Viscous operator on the velocity space.

    ``sym_grad`` assembles ``2 nu int eps(u):eps(v)``, ``grad_grad``
    assembles ``nu int grad u : grad v``.
    """
    if form == "grad_grad":
        return (nu * _vector_block(assemble_scalar_stiffness(dofmap))).tocsr()
    if form != "sym_grad":
        raise ValueError(f"unknown viscous form {form!r}")
    key = "sym_grad"
    if key not in dofmap._cache:
        W, D = dofmap.qweights, dofmap.dphi
        lap = np.einsum("mq,mqad,mqbd->mab", W, D, D)
        # 2 eps(phi_a e_c) : eps(phi_b e_d) = delta_cd grad a . grad b + d_d phi_a d_c phi_b
        cross = np.einsum("mq,mqad,mqbc->mbdac", W, D, D)
        loc = cross.copy()
        for c in range(2):
            loc[:, :, c, :, c] += lap.transpose(0, 2, 1)
        m = len(W)
        loc = loc.reshape(m, 12, 12)
        vd = dofmap.velocity_dofs
        dofmap._cache[key] = _symmetric(_scatter(loc, vd, vd, (dofmap.n_velocity,) * 2))
    return (nu * dofmap._cache[key]).tocsr()


def assemble_divergence(dofmap: DofMap) -> sp.csr_matrix:
    """``(B u)_k = -int psi_k div u`` (pressure rows, velocity columns)."""
    key = "divergence"
    if key not in dofmap._cache:
        loc = -np.einsum("mq,qk,mqac->mkac", dofmap.qweights, dofmap.psi, dofmap.dphi)
        loc = loc.reshape(len(loc), 3, 12)
        dofmap._cache[key] = _scatter(loc, dofmap.mesh.triangles, dofmap.velocity_dofs,
                                      (dofmap.n_pressure, dofmap.n_velocity))
    return dofmap._cache[key]


def assemble_convection(dofmap: DofMap, w: np.ndarray) -> sp.csr_matrix:
    """``N(w)``: trial ``u`` to ``int ((w . grad) u) . v``."""
    wq = dofmap.velocity_at_quad(w)
    adv = np.einsum("mqc,mqac->mqa", wq, dofmap.dphi)
    scal = np.einsum("mq,qb,mqa->mba", dofmap.qweights, dofmap.phi, adv)
    m = len(scal)
    loc = np.zeros((m, 6, 2, 6, 2))
    loc[:, :, 0, :, 0] = scal
    loc[:, :, 1, :, 1] = scal
    vd = dofmap.velocity_dofs
    return _scatter(loc.reshape(m, 12, 12), vd, vd, (dofmap.n_velocity,) * 2)


def assemble_convection_jacobian(dofmap: DofMap, u: np.ndarray) -> sp.csr_matrix:
    """Derivative of ``u -> N(u) u`` at ``u``: ``N(u) + M'(u)``.

    ``M'(u) delta = int ((delta . grad) u) . v``.
    """
    gu = dofmap.velocity_grad_at_quad(u)
    # row (b, d), column (a, c): int phi_a d_c u_d phi_b
    loc = np.einsum("mq,qb,qa,mqdc->mbdac", dofmap.qweights, dofmap.phi, dofmap.phi, gu)
    m = len(loc)
    vd = dofmap.velocity_dofs
    Mp = _scatter(loc.reshape(m, 12, 12), vd, vd, (dofmap.n_velocity,) * 2)
    return (assemble_convection(dofmap, u) + Mp).tocsr()


def trilinear(dofmap: DofMap, w: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """``t(w; u, v) = int ((w . grad) u) . v`` evaluated by quadrature."""
    wq = dofmap.velocity_at_quad(w)
    gu = dofmap.velocity_grad_at_quad(u)
    vq = dofmap.velocity_at_quad(v)
    return float(np.einsum("mq,mqc,mqdc,mqd->", dofmap.qweights, wq, gu, vq))


def trilinear_gradient(dofmap: DofMap, w: np.ndarray, u: np.ndarray, v: np.ndarray, slot: int) -> np.ndarray:
    """Gradient of ``t(w; u, v)`` with respect to argument ``slot`` (0, 1 or 2).

    The form is linear in each slot, so ``g . x`` reproduces ``t`` with ``x``
    substituted in that slot.
    """
    P, Dx, Dy, W = dofmap.quad_ops
    W = W[:, None]
    if slot == 0:
        gu = dofmap.velocity_grad_at_quad(u).reshape(-1, 2, 2)
        vq = P @ v.reshape(-1, 2)
        g = P.T @ (W * np.einsum("kdc,kd->kc", gu, vq))
    elif slot == 1:
        wq = P @ w.reshape(-1, 2)
        vq = P @ v.reshape(-1, 2)
        g = Dx.T @ (W * wq[:, :1] * vq) + Dy.T @ (W * wq[:, 1:] * vq)
    elif slot == 2:
        wq = P @ w.reshape(-1, 2)
        U = u.reshape(-1, 2)
        conv = wq[:, :1] * (Dx @ U) + wq[:, 1:] * (Dy @ U)
        g = P.T @ (W * conv)
    else:
        raise ValueError("slot must be 0, 1 or 2")
    return np.asarray(g).ravel()


def assemble_h1_gram(dofmap: DofMap, space: str = "velocity", norm: str | None = None) -> sp.csr_matrix:
    """Gram operator of the H1 inner product (``mass + stiffness``).

    ``norm="semi"`` drops the L2 part; the default follows ``dofmap.h1_norm``.
    """
    norm = norm or dofmap.h1_norm
    K = assemble_scalar_stiffness(dofmap)
    S = K if norm == "semi" else _symmetric(assemble_scalar_mass(dofmap) + K)
    if space == "scalar":
        return S
    if space == "velocity":
        return _vector_block(S)
    raise ValueError(f"unknown space {space!r}")


def assemble_l2_gram_pressure(dofmap: DofMap) -> sp.csr_matrix:
    key = "p1_mass"
    if key not in dofmap._cache:
        loc = np.einsum("mq,qk,ql->mkl", dofmap.qweights, dofmap.psi, dofmap.psi)
        t = dofmap.mesh.triangles
        dofmap._cache[key] = _symmetric(_scatter(loc, t, t, (dofmap.n_pressure,) * 2))
    return dofmap._cache[key]


def pressure_integrals(dofmap: DofMap) -> np.ndarray:
    """``int psi_k`` for every P1 basis function."""
    loc = np.einsum("mq,qk->mk", dofmap.qweights, dofmap.psi)
    return _scatter_vec(loc, dofmap.mesh.triangles, dofmap.n_pressure)


def load_vector(dofmap: DofMap, f: np.ndarray) -> np.ndarray:
    """``int f . v`` for a P2 velocity coefficient vector ``f``."""
    return _vector_block(assemble_scalar_mass(dofmap)) @ f


# ---------------------------------------------------------------------------
# constraints


def apply_constraints(obj, dofmap: DofMap):
    """Eliminate constrained velocity dofs from a vector or operator.

    Square velocity operators lose constrained rows and columns; operators
    with velocity columns only (e.g. the divergence) lose columns.
    """
    n = dofmap.n_velocity
    free = dofmap.free_velocity
    if sp.issparse(obj) or (isinstance(obj, np.ndarray) and obj.ndim == 2):
        rows, cols = obj.shape
        if cols != n:
            raise ValueError(f"operator has {cols} columns, velocity space has {n} dofs")
        A = sp.csr_matrix(obj) if sp.issparse(obj) else obj
        A = A[:, free]
        if rows == n:
            A = A[free, :]
        return A
    v = np.asarray(obj)
    if v.shape[0] != n:
        raise ValueError(f"vector has length {v.shape[0]}, velocity space has {n} dofs")
    return v[free]


def scatter_free(v_free: np.ndarray, dofmap: DofMap) -> np.ndarray:
    """Extend a reduced velocity vector by zeros on constrained dofs."""
    free = dofmap.free_velocity
    if v_free.shape[0] != len(free):
        raise ValueError(f"reduced vector has length {v_free.shape[0]}, expected {len(free)}")
    out = np.zeros((dofmap.n_velocity,) + v_free.shape[1:])
    out[free] = v_free
    return out


def constrain(obj, dofmap: DofMap):
    """Full-size projection ``P A P`` (or ``P v``) zeroing constrained dofs."""
    mask = (dofmap.constraint == FREE).astype(float)
    if sp.issparse(obj):
        P = sp.diags(mask)
        return (P @ obj @ P).tocsr()
    v = np.asarray(obj, dtype=float)
    if v.ndim == 2:
        return v * mask[:, None] * mask[None, :]
    return v * mask


# ---------------------------------------------------------------------------
# interpolation


def interpolate_p2(dofmap: DofMap, func) -> np.ndarray:
    x = dofmap.p2_nodes
    return np.asarray(func(x[:, 0], x[:, 1]), dtype=float) * np.ones(len(x))


def interpolate_velocity(dofmap: DofMap, func) -> np.ndarray:
    x = dofmap.p2_nodes
    ux, uy = func(x[:, 0], x[:, 1])
    out = np.empty(2 * len(x))
    out[0::2] = ux
    out[1::2] = uy
    return out


def interpolate_p1(dofmap: DofMap, func) -> np.ndarray:
    v = dofmap.mesh.vertices
    return np.asarray(func(v[:, 0], v[:, 1]), dtype=float) * np.ones(len(v))

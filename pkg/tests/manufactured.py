"""Manufactured stationary flows on the unit square, derived symbolically."""
from functools import lru_cache

import numpy as np
import sympy as sy

from knwidth.fem import build_dofmap, interpolate_velocity
from knwidth.mesh import BoundarySpec, generate_rectangle

X, Y = sy.symbols("x y")


@lru_cache(maxsize=None)
def flow(nu: float, convective: bool, amp: float = 10.0):
    """``(u, grad_u, p, f)`` as numpy callables; u vanishes on the boundary, p has zero mean."""
    psi = amp * X**2 * (1 - X) ** 2 * Y**2 * (1 - Y) ** 2
    u = sy.Matrix([sy.diff(psi, Y), -sy.diff(psi, X)])
    p = sy.sin(sy.pi * X) * sy.cos(sy.pi * Y)
    lap = sy.Matrix([sy.diff(c, X, 2) + sy.diff(c, Y, 2) for c in u])
    grad = sy.Matrix([[sy.diff(c, X), sy.diff(c, Y)] for c in u])
    f = -nu * lap + sy.Matrix([sy.diff(p, X), sy.diff(p, Y)])
    if convective:
        f += grad * u
    lam = lambda e: sy.lambdify((X, Y), e, "numpy")
    return lam(list(u)), lam(grad.tolist()), lam(p), lam(list(f))


def unit_square(n: int):
    m = generate_rectangle(1.0, 1.0, n)
    return build_dofmap(m, BoundarySpec.all_dirichlet(m))


def forcing(dofmap, nu, convective):
    f = flow(nu, convective)[3]
    return interpolate_velocity(dofmap, lambda x, y: [np.broadcast_to(c, x.shape) for c in f(x, y)])


def errors(dofmap, sol, nu, convective):
    """H1 velocity error and L2 pressure error, by the mesh quadrature."""
    u_ex, g_ex, p_ex, _ = flow(nu, convective)
    x, y = dofmap.quad_xy[..., 0], dofmap.quad_xy[..., 1]
    w = dofmap.qweights
    ue = np.stack([np.broadcast_to(c, x.shape) for c in u_ex(x, y)], axis=-1)
    ge = np.array([[np.broadcast_to(c, x.shape) for c in row] for row in g_ex(x, y)])
    ge = np.moveaxis(ge, (0, 1), (-2, -1))
    du = dofmap.velocity_at_quad(sol.u) - ue
    dg = dofmap.velocity_grad_at_quad(sol.u) - ge
    h1 = np.sqrt(np.sum(w * ((du**2).sum(-1) + (dg**2).sum((-1, -2)))))
    dp = dofmap.pressure_at_quad(sol.p) - p_ex(x, y)
    return float(h1), float(np.sqrt(np.sum(w * dp**2)))

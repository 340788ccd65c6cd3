"""FEM benchmark problems for the adaptive loop."""

from __future__ import annotations

import numpy as np

from ..estimators import eta_dual, eta_primal
from ..fem import (
    EllipticCoefficients,
    FESpace,
    LoadData,
    assemble_dual,
    assemble_matrix,
    assemble_primal,
    factorize,
    lift_dirichlet,
    solve,
)
from ..goals import goal_flux, goal_volume
from ..marking import LevelData
from ..mesh import Mesh2, nvb_refine

__all__ = ["FEMGoalProblem", "square_mesh", "experiment_one", "experiment_two", "pulse"]


class FEMGoalProblem:
    """Primal/dual pair for the adaptive loop.

    Volume goals pass ``dual_load``; flux goals pass the boundary ``weight``
    (the dual Dirichlet datum) and leave ``dual_load`` empty.  ``extended``
    assembles in long double so that goal values stay accurate far below
    the double-precision assembly noise (roughly ``N eps |u| |z|``).
    """

    def __init__(self, mesh0, p, coeffs, load, dual_load=None, dirichlet=None, weight=None,
                 reference=None, name="fem", extended=False):
        self.mesh0 = mesh0
        self.p = p
        self.coeffs = coeffs
        self.load = load
        self.dual_load = dual_load if dual_load is not None else LoadData()
        self.dirichlet = dirichlet
        self.weight = weight
        self.reference = reference
        self.name = name
        self.extended = extended

    def initial_mesh(self):
        return self.mesh0

    def refine(self, mesh, marked):
        return nvb_refine(mesh, marked)

    def solve(self, mesh):
        """Primal and dual discrete solutions on ``mesh``."""
        space = FESpace(mesh, self.p)
        K = assemble_matrix(space, self.coeffs, self.extended)
        lift_u = lift_dirichlet(space, self.dirichlet) if self.dirichlet is not None else None
        lift_z = lift_dirichlet(space, self.weight) if self.weight is not None else None
        primal = assemble_primal(space, self.coeffs, self.load, lift_u, matrix=K)
        fac = factorize(primal)
        U = solve(primal, fac)
        dual = assemble_dual(space, self.coeffs, self.dual_load, lift_z, matrix=K)
        Z = solve(dual, fac, transpose=True)
        return space, U, Z

    def goal(self, U, Z):
        if self.weight is not None:
            return goal_flux(Z, self.load, self.weight, self.coeffs, U)
        return goal_volume(U, self.dual_load.f1, self.dual_load.f2, self.extended)

    def compute(self, mesh):
        space, U, Z = self.solve(mesh)
        eu = eta_primal(space, self.coeffs, self.load, U)
        ez = eta_dual(space, self.coeffs, self.dual_load, Z)
        return LevelData(eu.values, ez.values, self.goal(U, Z), extra={"space": space, "U": U, "Z": Z})


def square_mesh(n, anti=True):
    """Unit square cut into ``n × n`` squares, each split along one diagonal.

    With ``anti`` the cut runs from the lower-right to the upper-left corner.
    Boundary label 0 is ``y = 0``, then 1, 2, 3 counter-clockwise.
    """
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = lambda i, j: j * (n + 1) + i
    tris = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris += [[a, b, d], [b, c, d]] if anti else [[a, b, c], [a, c, d]]
    bnd, lab = [], []
    for i in range(n):
        bnd.append([idx(i, 0), idx(i + 1, 0)]); lab.append(0)
        bnd.append([idx(n, i), idx(n, i + 1)]); lab.append(1)
        bnd.append([idx(n - i, n), idx(n - i - 1, n)]); lab.append(2)
        bnd.append([idx(0, n - i), idx(0, n - i - 1)]); lab.append(3)
    return Mesh2(verts, np.array(tris), boundary_edges=np.array(bnd), boundary_labels=np.array(lab))


def _indicator_table(mesh, corner_triangle):
    """Per-root vector field ``(χ_ω, 0)`` where ω is the root triangle with the given vertices."""
    target = np.sort(np.asarray(corner_triangle, float), axis=0)
    table = np.zeros((mesh.n_elements, 2))
    for k, tri in enumerate(mesh.triangles):
        if np.allclose(np.sort(mesh.vertices[tri], axis=0), target):
            table[k, 0] = 1.0
    if table[:, 0].sum() != 1:
        raise ValueError("triangle is not an element of the initial mesh")
    return table


T_F = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5)]
T_G = [(1.0, 1.0), (0.5, 1.0), (1.0, 0.5)]


def experiment_one(p=3, reference=None):
    """Poisson on the unit square, ``f(v) = -∫_{T_f} ∂_1 v``, ``g(v) = -∫_{T_g} ∂_1 v``."""
    mesh0 = square_mesh(2)
    load = LoadData(f2=_indicator_table(mesh0, T_F))
    goal = LoadData(f2=_indicator_table(mesh0, T_G))
    return FEMGoalProblem(mesh0, p, EllipticCoefficients(), load, goal, reference=reference,
                          name="exp1", extended=True)


def pulse(a, b, c):
    """Hat of height 1 on ``y = 0`` with kinks at ``x = a, b, c``; zero elsewhere on the boundary."""
    def f(x):
        x = np.asarray(x, float)
        s, y = x[..., 0], x[..., 1]
        up = (s - a) / (b - a)
        down = (c - s) / (c - b)
        hat = np.clip(np.minimum(up, down), 0.0, None)
        return np.where(np.abs(y) < 1e-13, hat, 0.0)
    return f


def experiment_two(nu=1e-3, reference=None):
    """Convection-diffusion with rotating field and a flux goal on ``y = 0``."""
    mesh0 = square_mesh(6)
    coeffs = EllipticCoefficients(
        diffusion=nu * np.eye(2),
        convection=lambda x: np.stack([x[..., 1], 0.5 - x[..., 0]], axis=-1),
        convection_div=0.0,
    )
    return FEMGoalProblem(mesh0, 1, coeffs, LoadData(), dirichlet=pulse(1 / 6, 1 / 3, 1 / 2),
                          weight=pulse(2 / 3, 5 / 6, 1.0), reference=reference, name="exp2")

"""Lagrange finite elements of degree 1-3 for non-symmetric elliptic problems.

The bilinear form is

    a(u, v) = ∫ A∇u·∇v + (b·∇u) v + c u v dx

and loads are of the form ``f(v) = ∫ f1 v - f2·∇v dx`` with ``f2`` constant on
every element of the initial mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, InputError, NumericalError
from .mesh import Mesh2
from .ordering import nested_dissection
from .quadrature import gauss_interval, triangle_rule

__all__ = [
    "LagrangeElement",
    "FESpace",
    "EllipticCoefficients",
    "LoadData",
    "DiscreteFunction",
    "LinearSystem",
    "assemble_matrix",
    "assemble_load",
    "assemble_primal",
    "assemble_dual",
    "lift_dirichlet",
    "solve",
    "factorize",
    "Factorization",
    "bilinear_form",
]

_CHUNK = 20000


# ----------------------------------------------------------------------
# reference element


def _lattice(p):
    """Reference nodes: vertices, edge nodes (edge k runs v_k -> v_{k+1}), interior."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes = [verts[0], verts[1], verts[2]]
    for k in range(3):
        a, b = verts[k], verts[(k + 1) % 3]
        for j in range(1, p):
            nodes.append(a + (j / p) * (b - a))
    for j in range(1, p):
        for i in range(1, p - j):
            nodes.append(np.array([i / p, j / p]))
    return np.array(nodes)


class LagrangeElement:
    """Nodal basis of degree ``p`` on the reference triangle."""

    def __init__(self, p):
        if p not in (1, 2, 3):
            raise InputError("polynomial degree must be 1, 2 or 3")
        self.p = p
        self.nodes = _lattice(p)
        self.n_local = len(self.nodes)
        self.exponents = [(i, j) for i in range(p + 1) for j in range(p + 1 - i)]
        vander = self._monomials(self.nodes)
        self.coeffs = np.linalg.inv(vander)

    def _monomials(self, pts, dx=0, dy=0):
        x = pts[..., 0]
        y = pts[..., 1]
        cols = []
        for i, j in self.exponents:
            if i < dx or j < dy:
                cols.append(np.zeros_like(x))
                continue
            c = math.perm(i, dx) * math.perm(j, dy)
            cols.append(c * x ** (i - dx) * y ** (j - dy))
        return np.stack(cols, axis=-1)

    def values(self, pts):
        return self._monomials(np.asarray(pts, float)) @ self.coeffs

    def gradients(self, pts):
        pts = np.asarray(pts, float)
        gx = self._monomials(pts, 1, 0) @ self.coeffs
        gy = self._monomials(pts, 0, 1) @ self.coeffs
        return np.stack([gx, gy], axis=-1)

    def hessians(self, pts):
        pts = np.asarray(pts, float)
        hxx = self._monomials(pts, 2, 0) @ self.coeffs
        hxy = self._monomials(pts, 1, 1) @ self.coeffs
        hyy = self._monomials(pts, 0, 2) @ self.coeffs
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


@lru_cache(maxsize=None)
def _element(p):
    return LagrangeElement(p)


def _solve_rational(M):
    """Inverse of a small rational matrix by Gauss-Jordan elimination."""
    n = len(M)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for c in range(n):
        piv = next(r for r in range(c, n) if aug[r][c] != 0)
        aug[c], aug[piv] = aug[piv], aug[c]
        inv = 1 / aug[c][c]
        aug[c] = [v * inv for v in aug[c]]
        for r in range(n):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[c])]
    return [row[n:] for row in aug]


@lru_cache(maxsize=None)
def _exact_tables(p):
    """Stiffness, mass and gradient integrals on the reference triangle in long double.

    Computed in rational arithmetic: the nodal basis comes from an exact
    Vandermonde inverse and ``∫ x^i y^j = i! j! / (i + j + 2)!``.
    """
    el = _element(p)
    exps = el.exponents
    nodes = [(Fraction(round(x * p)), Fraction(round(y * p))) for x, y in el.nodes]
    nodes = [(x / p, y / p) for x, y in nodes]
    V = [[x**i * y**j for i, j in exps] for x, y in nodes]
    coef = _solve_rational(V)  # basis k = Σ_m coef[m][k] x^i_m y^j_m

    def poly(k):
        return {e: coef[m][k] for m, e in enumerate(exps) if coef[m][k] != 0}

    def deriv(P, a):
        out = {}
        for (i, j), c in P.items():
            if a == 0 and i > 0:
                out[(i - 1, j)] = out.get((i - 1, j), 0) + c * i
            if a == 1 and j > 0:
                out[(i, j - 1)] = out.get((i, j - 1), 0) + c * j
        return out

    def integral(P, Q=None):
        tot = Fraction(0)
        terms = P.items() if Q is None else (((i1 + i2, j1 + j2), c1 * c2)
                                            for (i1, j1), c1 in P.items() for (i2, j2), c2 in Q.items())
        for (i, j), c in terms:
            tot += c * Fraction(math.factorial(i) * math.factorial(j), math.factorial(i + j + 2))
        return tot

    n = el.n_local
    basis = [poly(k) for k in range(n)]
    grads = [[deriv(b, a) for a in (0, 1)] for b in basis]
    ld = lambda q: np.longdouble(q.numerator) / np.longdouble(q.denominator)
    stiff = np.empty((n, n, 2, 2), dtype=np.longdouble)
    mass = np.empty((n, n), dtype=np.longdouble)
    gint = np.empty((n, 2), dtype=np.longdouble)
    for i in range(n):
        for a in range(2):
            gint[i, a] = ld(integral(grads[i][a]))
        for j in range(n):
            mass[i, j] = ld(integral(basis[i], basis[j]))
            for a in range(2):
                for b in range(2):
                    stiff[i, j, a, b] = ld(integral(grads[i][a], grads[j][b]))
    return stiff, mass, gint


@lru_cache(maxsize=None)
def _reference_tables(p):
    """Quadrature-weighted reference integrals reused by every assembly."""
    el = _element(p)
    pts, w = triangle_rule(2 * p + 1)
    phi = el.values(pts)
    grad = el.gradients(pts)
    stiff = np.einsum("q,qia,qjb->ijab", w, grad, grad)
    mass = np.einsum("q,qi,qj->ij", w, phi, phi)
    grad_int = np.einsum("q,qia->ia", w, grad)
    return pts, w, phi, grad, stiff, mass, grad_int


# ----------------------------------------------------------------------
# data


def _per_root(value, mesh, shape):
    """Broadcast a constant or per-root table to per-element values."""
    arr = np.asarray(value, dtype=float)
    if arr.shape == shape:
        return np.broadcast_to(arr, (mesh.n_elements,) + shape)
    n_roots = mesh.forest.n_elements
    if arr.shape == (n_roots,) + shape:
        return arr[mesh.root]
    raise InputError(f"coefficient table has shape {arr.shape}; expected {shape} or {(n_roots,) + shape}")


@dataclass(frozen=True)
class EllipticCoefficients:
    """Coefficients of ``-div(A∇u) + b·∇u + c u``.

    ``diffusion`` and ``reaction`` are constants or tables indexed by root
    element.  ``convection`` maps points of shape ``(..., 2)`` to vectors; it
    must be affine so that assembly and estimators stay exact.
    ``convection_div`` is its (constant) divergence.
    """

    diffusion: np.ndarray = field(default_factory=lambda: np.eye(2))
    convection: Callable | None = None
    convection_div: float = 0.0
    reaction: float | np.ndarray = 0.0

    def diffusion_on(self, mesh):
        A = _per_root(self.diffusion, mesh, (2, 2))
        sym = A[..., 0, 1] - A[..., 1, 0]
        det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        if np.any(np.abs(sym) > 1e-14 * np.abs(A).max()) or np.any(A[..., 0, 0] <= 0) or np.any(det <= 0):
            raise ConfigurationError("diffusion matrix must be symmetric positive definite")
        return A

    def reaction_on(self, mesh):
        return _per_root(self.reaction, mesh, ())

    def transposed(self):
        """Coefficients of the formal adjoint ``-div(A∇z) - b·∇z + (c - div b) z``."""
        b = self.convection
        neg = None if b is None else (lambda x, b=b: -np.asarray(b(x)))
        return EllipticCoefficients(
            diffusion=self.diffusion,
            convection=neg,
            convection_div=-self.convection_div,
            reaction=np.asarray(self.reaction, float) - self.convection_div,
        )


@dataclass(frozen=True)
class LoadData:
    """Functional ``v -> ∫ f1 v - f2·∇v``; ``f2`` is constant on initial elements."""

    f1: Callable | float | None = None
    f2: np.ndarray | None = None

    def f2_on(self, mesh):
        if self.f2 is None:
            return np.zeros((mesh.n_elements, 2))
        return _per_root(self.f2, mesh, (2,))

    def f1_at(self, x):
        if self.f1 is None:
            return np.zeros(x.shape[:-1])
        if callable(self.f1):
            return np.broadcast_to(np.asarray(self.f1(x), float), x.shape[:-1])
        return np.full(x.shape[:-1], float(self.f1))

    @property
    def is_zero(self):
        return self.f1 is None and (self.f2 is None or not np.any(self.f2))


# ----------------------------------------------------------------------
# spaces and functions


class FESpace:
    """Continuous piecewise polynomials of degree ``p`` on a :class:`Mesh2`."""

    def __init__(self, mesh: Mesh2, p: int):
        self.mesh = mesh
        self.p = p
        self.element = _element(p)

    @property
    def n_local(self):
        return self.element.n_local

    @cached_property
    def dofs(self):
        mesh, p = self.mesh, self.p
        t = mesh.triangles
        m, nv = mesh.n_elements, mesh.n_vertices
        ne = len(mesh.edges)
        cols = [t[:, 0], t[:, 1], t[:, 2]]
        e2e = mesh.element_edges
        for k in range(3):
            forward = t[:, k] < t[:, (k + 1) % 3]
            for j in range(1, p):
                jj = np.where(forward, j, p - j)
                cols.append(nv + e2e[:, k] * (p - 1) + (jj - 1))
        n_int = (p - 1) * (p - 2) // 2
        for i in range(n_int):
            cols.append(nv + ne * (p - 1) + np.arange(m) * n_int + i)
        out = np.stack(cols, axis=1).astype(np.int64)
        out.setflags(write=False)
        return out

    @cached_property
    def n_dofs(self):
        p = self.p
        return self.mesh.n_vertices + len(self.mesh.edges) * (p - 1) + self.mesh.n_elements * (p - 1) * (p - 2) // 2

    @cached_property
    def geometry(self):
        """``(x0, B, Binv, detB)`` of the affine maps ``x = x0 + B ξ``."""
        return self._geometry(float)

    @cached_property
    def geometry_extended(self):
        return self._geometry(np.longdouble)

    def _geometry(self, dtype):
        v = self.mesh.vertices[self.mesh.triangles].astype(dtype)
        x0 = v[:, 0]
        B = np.stack([v[:, 1] - x0, v[:, 2] - x0], axis=2)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        Binv = np.empty_like(B)
        Binv[:, 0, 0] = B[:, 1, 1] / det
        Binv[:, 1, 1] = B[:, 0, 0] / det
        Binv[:, 0, 1] = -B[:, 0, 1] / det
        Binv[:, 1, 0] = -B[:, 1, 0] / det
        return x0, B, Binv, det

    def map_points(self, ref_pts, elements=slice(None)):
        x0, B, _, _ = self.geometry
        return x0[elements, None, :] + np.einsum("eab,qb->eqa", B[elements], ref_pts)

    @cached_property
    def dof_coordinates(self):
        xy = np.empty((self.n_dofs, 2))
        xy[self.dofs] = self.map_points(self.element.nodes)
        return xy

    @cached_property
    def boundary_dofs(self):
        """Sorted dof indices on the boundary."""
        mesh, p = self.mesh, self.p
        ids = mesh.boundary_edge_ids
        parts = [mesh.boundary_edges.ravel()]
        nv = mesh.n_vertices
        for j in range(p - 1):
            parts.append(nv + ids * (p - 1) + j)
        return np.unique(np.concatenate(parts))

    @cached_property
    def free(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return mask

    def interpolate(self, func):
        """Nodal interpolant of ``func`` (points ``(..., 2)`` -> values)."""
        return DiscreteFunction(self, np.asarray(func(self.dof_coordinates), float).copy())


@dataclass
class DiscreteFunction:
    space: FESpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.n_dofs,):
            raise InputError("coefficient vector does not match the space")

    @classmethod
    def zero(cls, space):
        return cls(space, np.zeros(space.n_dofs))

    def local(self):
        return self.coefficients[self.space.dofs]

    def gradients_at(self, ref_pts):
        """Physical gradients at reference points, shape ``(M, Q, 2)``."""
        _, _, Binv, _ = self.space.geometry
        g = self.space.element.gradients(ref_pts)
        gref = np.einsum("qia,ei->eqa", g, self.local())
        return np.einsum("eqa,eab->eqb", gref, Binv)

    def values_at(self, ref_pts):
        return self.local() @ self.space.element.values(ref_pts).T

    def __call__(self, points):
        """Evaluate at physical points (slow path: point location by brute force)."""
        pts = np.atleast_2d(np.asarray(points, float))
        x0, B, Binv, _ = self.space.geometry
        out = np.full(len(pts), np.nan)
        for n, x in enumerate(pts):
            xi = np.einsum("eab,eb->ea", Binv, x - x0)
            inside = (xi[:, 0] >= -1e-12) & (xi[:, 1] >= -1e-12) & (xi.sum(1) <= 1 + 1e-12)
            e = int(np.flatnonzero(inside)[0])
            out[n] = self.local()[e] @ self.space.element.values(xi[e][None])[0]
        return out


# ----------------------------------------------------------------------
# assembly


def _element_matrices(space, coeffs, sl, extended=False):
    p = space.p
    pts, w, phi, grad, stiff, mass, _ = _reference_tables(p)
    if extended:
        stiff, mass, _ = _exact_tables(p)
        _, _, Binv, det = space.geometry_extended
    else:
        _, _, Binv, det = space.geometry
    Binv, det = Binv[sl], det[sl]
    A = coeffs.diffusion_on(space.mesh)[sl].astype(Binv.dtype)
    C = np.einsum("eak,ekl,ebl->eab", Binv, A, Binv)
    K = det[:, None, None] * np.einsum("eab,ijab->eij", C, stiff)
    c = coeffs.reaction_on(space.mesh)[sl]
    if np.any(c):
        K += (c * det)[:, None, None] * mass[None]
    if coeffs.convection is not None:
        _, _, Binv_d, det_d = space.geometry
        x = space.map_points(pts, sl)
        bq = np.asarray(coeffs.convection(x), float)
        g = np.einsum("qja,eab->eqjb", grad, Binv_d[sl])
        bg = np.einsum("eqb,eqjb->eqj", bq, g)
        K += det_d[sl, None, None] * np.einsum("q,qi,eqj->eij", w, phi, bg)
    return K


def assemble_matrix(space, coeffs, extended=False):
    """Full matrix ``K[i, j] = a(φ_j, φ_i)`` over all dofs (CSR).

    With ``extended`` the diffusion and reaction parts are integrated exactly
    and summed in long double; the result then has dtype ``longdouble``.
    """
    dofs = space.dofs
    m, nl = dofs.shape
    data = np.empty((m, nl, nl), dtype=np.longdouble if extended else float)
    for start in range(0, m, _CHUNK):
        sl = slice(start, min(start + _CHUNK, m))
        data[sl] = _element_matrices(space, coeffs, sl, extended)
    rows = np.broadcast_to(dofs[:, :, None], (m, nl, nl)).ravel()
    cols = np.broadcast_to(dofs[:, None, :], (m, nl, nl)).ravel()
    n = space.n_dofs
    return sp.csr_matrix((data.ravel(), (rows, cols)), shape=(n, n))


def assemble_load(space, load, extended=False):
    """Vector ``F[i] = ∫ f1 φ_i - f2·∇φ_i``."""
    p = space.p
    if extended:
        _, _, Binv, det = space.geometry_extended
        grad_int = _exact_tables(p)[2]
    else:
        _, _, Binv, det = space.geometry
        grad_int = _reference_tables(p)[6]
    f2 = load.f2_on(space.mesh).astype(Binv.dtype)
    # ∫_T f2·∇φ_i = det * f2 · (Binv^T ∫ ∇ξ φ_i)
    local = -det[:, None] * np.einsum("ea,eba,ib->ei", f2, Binv, grad_int)
    if load.f1 is not None:
        pts, w = triangle_rule(2 * p + 2)
        phi = space.element.values(pts)
        x = space.map_points(pts)
        fx = load.f1_at(x)
        local += space.geometry[3][:, None] * np.einsum("q,eq,qi->ei", w, fx, phi)
    out = np.zeros(space.n_dofs, dtype=local.dtype)
    np.add.at(out, space.dofs.ravel(), local.ravel())
    return out


def bilinear_form(space, coeffs, u, v):
    """``a(u, v)`` for two discrete functions on ``space``."""
    K = assemble_matrix(space, coeffs)
    return float(v.coefficients @ (K @ u.coefficients))


@dataclass
class LinearSystem:
    """Free-dof system ``matrix @ x = rhs``; ``values`` carries the Dirichlet part."""

    space: FESpace
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    values: np.ndarray
    full_matrix: sp.csr_matrix = None
    load: np.ndarray = None


def _dirichlet_values(space, dirichlet):
    if dirichlet is None:
        return np.zeros(space.n_dofs)
    if isinstance(dirichlet, DiscreteFunction):
        if dirichlet.space is not space:
            raise InputError("Dirichlet lifting lives on a different space")
        vals = np.zeros(space.n_dofs)
        bd = space.boundary_dofs
        vals[bd] = dirichlet.coefficients[bd]
        return vals
    raise InputError("Dirichlet datum must be a DiscreteFunction or None")


def assemble_primal(space, coeffs, load, dirichlet=None, matrix=None, extended=False):
    """System for ``a(U, V) = f(V)`` with ``U`` equal to the lifting on the boundary."""
    K = assemble_matrix(space, coeffs, extended) if matrix is None else matrix
    F = assemble_load(space, load, K.dtype == np.longdouble)
    vals = _dirichlet_values(space, dirichlet)
    free = space.free
    rhs = F - K @ vals
    return LinearSystem(space, K[free][:, free].tocsc(), rhs[free], free, vals, K, F)


def assemble_dual(space, coeffs, dual_load, dirichlet=None, matrix=None, extended=False):
    """System for ``a(V, Z) = g(V)``: the transposed primal matrix."""
    K = assemble_matrix(space, coeffs, extended) if matrix is None else matrix
    Kt = K.T.tocsr()
    G = assemble_load(space, dual_load, K.dtype == np.longdouble)
    vals = _dirichlet_values(space, dirichlet)
    free = space.free
    rhs = G - Kt @ vals
    return LinearSystem(space, Kt[free][:, free].tocsc(), rhs[free], free, vals, Kt, G)


def lift_dirichlet(space, trace, check=True):
    """Zero extension of the nodal boundary values of ``trace``.

    ``trace`` maps points ``(..., 2)`` to values and must be a polynomial of
    degree ≤ p on every boundary edge of the initial mesh.
    """
    if check:
        _check_trace(space, trace)
    vals = np.zeros(space.n_dofs)
    bd = space.boundary_dofs
    vals[bd] = np.asarray(trace(space.dof_coordinates[bd]), float)
    return DiscreteFunction(space, vals)


def _check_trace(space, trace):
    root = space.mesh.forest
    p = space.p
    e = root.boundary_edges
    a = root.vertices[e[:, 0]]
    b = root.vertices[e[:, 1]]
    t_nodes = np.linspace(0.0, 1.0, p + 1)
    t_test, _ = gauss_interval(p + 2)
    pts = lambda t: a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    at_nodes = np.asarray(trace(pts(t_nodes)), float)
    at_test = np.asarray(trace(pts(t_test)), float)
    # Lagrange interpolation on [0, 1]
    L = np.ones((len(t_test), p + 1))
    for j in range(p + 1):
        for k in range(p + 1):
            if k != j:
                L[:, j] *= (t_test - t_nodes[k]) / (t_nodes[j] - t_nodes[k])
    interp = at_nodes @ L.T
    scale = max(1.0, float(np.abs(at_nodes).max(initial=0.0)))
    if np.any(np.abs(interp - at_test) > 1e-10 * scale):
        raise InputError("Dirichlet trace is not piecewise polynomial on the initial boundary mesh")


class Factorization:
    """Sparse LU of a free-dof matrix, reusable for transposed solves.

    The ordering is a geometric nested dissection on the dof coordinates.
    """

    def __init__(self, matrix, coordinates=None, pivot_threshold=0.01):
        self.matrix = sp.csc_matrix(matrix)
        dbl = self.matrix.astype(float)
        n = self.matrix.shape[0]
        if coordinates is None or n <= 2000:
            self.perm = None
            B = dbl
            spec = "COLAMD"
        else:
            self.perm = nested_dissection(dbl, coordinates)
            B = dbl[self.perm][:, self.perm].tocsc()
            spec = "NATURAL"
        try:
            self.lu = spla.splu(B, permc_spec=spec, diag_pivot_thresh=pivot_threshold,
                                options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise NumericalError(f"sparse factorization failed: {exc}") from exc

    def _raw(self, b, trans):
        t = "T" if trans else "N"
        if self.perm is None:
            return self.lu.solve(b, trans=t)
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm], trans=t)
        return x

    def _operator(self, transpose):
        key = "_csr_t" if transpose else "_csr"
        if not hasattr(self, key):
            setattr(self, key, (self.matrix.T if transpose else self.matrix).tocsr())
        return getattr(self, key)

    def solve(self, b, transpose=False, rtol=1e-12, extended_steps=3):
        """Solve with iterative refinement; raise when the residual stays large.

        Refinement uses residuals accumulated in extended precision, which
        drives the forward error to the level of rounding the solution.  The
        residual target is ``rtol`` or the double-precision rounding floor
        ``4 eps ‖|A| |x|‖ / ‖b‖``, whichever is larger.
        """
        A = self._operator(transpose)
        b_ext = np.asarray(b)
        b = b_ext.astype(float)
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        x = self._raw(b, transpose)
        for _ in range(extended_steps):
            r = _residual_extended(A, x, b_ext)
            dx = self._raw(r, transpose)
            x = x + dx
            if np.linalg.norm(dx) <= 4 * np.finfo(float).eps * np.linalg.norm(x):
                break
        res = float(np.linalg.norm((A @ x - b_ext).astype(float)) / bnorm)
        floor = 4 * np.finfo(float).eps * float(np.linalg.norm((abs(A) @ np.abs(x)).astype(float))) / bnorm
        if not np.all(np.isfinite(x)) or res > max(rtol, floor):
            cond = _condition_estimate(self.lu, A)
            raise NumericalError(f"relative residual {res:.3e} exceeds {rtol:.0e} (cond ≈ {cond:.2e})")
        self.residual = res
        return x


def _residual_extended(A, x, b):
    """``b - A x`` accumulated in long double, rounded to double."""
    ld = np.longdouble
    prod = A.data.astype(ld) * x.astype(ld)[A.indices]
    counts = np.diff(A.indptr)
    Ax = np.zeros(A.shape[0], dtype=ld)
    rows = np.flatnonzero(counts)
    if rows.size:
        Ax[rows] = np.add.reduceat(prod, A.indptr[rows])
    return (b.astype(ld) - Ax).astype(float)


def factorize(system):
    space = system.space
    return Factorization(system.matrix, space.dof_coordinates[system.free])


def solve(system, factorization=None, transpose=False, rtol=1e-12):
    """Direct sparse solve of the free-dof system with iterative refinement.

    Pass the factorization of the primal matrix with ``transpose=True`` to
    solve the dual system without factoring again.
    """
    space = system.space
    x_full = system.values.copy()
    if system.matrix.shape[0] == 0:
        return DiscreteFunction(space, x_full)
    fac = factorize(system) if factorization is None else factorization
    x_full[system.free] = fac.solve(system.rhs, transpose=transpose, rtol=rtol)
    return DiscreteFunction(space, x_full)


def _condition_estimate(lu, A):
    try:
        inv = spla.LinearOperator(A.shape, matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="T"))
        return spla.onenormest(A) * spla.onenormest(inv)
    except Exception:  # estimate is diagnostic only
        return float("nan")

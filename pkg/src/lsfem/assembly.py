"""Least-squares system assembly.

The bilinear form is b(w, v) = <L w, L v> over the domain, so the element
matrices are Gram matrices of the operator applied to the six local shape
functions, and the load vector tests F = (f, 0) against the same operator
images.  The assembled matrix is symmetric entry for entry (the local
matrices are exact Gram matrices and the accumulation order of the (j, k)
and (k, j) contributions is identical) and positive definite whenever the
continuous problem is well posed.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import AssemblyValidityError, SolverError
from .quadrature import quadrature_rule
from .spaces import eval_local_basis, geometry_tables

MAX_DOFS = 200_000


class SparseSpd:
    """CSR matrix wrapper with a cached sparse factorization.

    The factorization is a symmetric-mode LU with the diagonal pivot
    threshold disabled, so for a symmetric matrix it acts as a Cholesky-type
    decomposition: any non-positive pivot proves the matrix indefinite and
    is rejected.
    """

    def __init__(self, matrix):
        self.matrix = sp.csr_matrix(matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("matrix must be square")
        self._factor = None

    @property
    def n(self):
        return self.matrix.shape[0]

    def diagonal(self):
        return self.matrix.diagonal()

    def matvec(self, x):
        return self.matrix @ x

    def factor(self):
        if self._factor is None:
            try:
                lu = splu(self.matrix.tocsc(),
                          permc_spec="MMD_AT_PLUS_A",
                          diag_pivot_thresh=0.0,
                          options={"SymmetricMode": True})
            except RuntimeError as exc:     # singular factor
                raise SolverError(f"factorization failed: {exc}") from exc
            pivots = lu.U.diagonal()
            if not np.all(np.isfinite(pivots)) or pivots.min() <= 0.0:
                raise SolverError(
                    "matrix is not positive definite (non-positive pivot)")
            self._factor = lu
        return self._factor


def _quad_points(mesh, rule):
    """Physical quadrature points (nt, nq, 2) and absolute weights (nt, nq)."""
    tables = geometry_tables(mesh)
    phys = np.einsum("qi,tid->tqd", rule.points, tables["coords"])
    w_abs = rule.weights[None, :] * tables["area"][:, None]
    return phys, w_abs


def operator_basis_images(mesh, dofmap, problem, rule):
    """Operator images of all local shape functions at quadrature points.

    Returns (images, w_abs, phys) where images has shape (nt, nq, 6, 3):
    local dofs are the three hats then the three edge fields, and the last
    axis carries the operator components (scalar row, two vector rows).
    """
    tables = geometry_tables(mesh)
    nt = mesh.n_elements
    nq = rule.points.shape[0]
    phys, w_abs = _quad_points(mesh, rule)
    flat = phys.reshape(-1, 2)
    a_vals = problem.a_fn(flat).reshape(nt, nq, 2, 2)
    b_vals = problem.b_fn(flat).reshape(nt, nq, 2)
    c_vals = problem.c_fn(flat).reshape(nt, nq)

    grads = tables["hat_grads"]                         # (nt, 3, 2)
    images = np.zeros((nt, nq, 6, 3))
    # hats: state (lambda_j, grad lambda_j, 0, 0)
    hat_vals = rule.points                              # (nq, 3)
    images[:, :, :3, 0] = (np.einsum("tqd,tjd->tqj", b_vals, grads)
                           + c_vals[:, :, None] * hat_vals[None, :, :])
    a_grad = np.einsum("tqde,tje->tqjd", a_vals, grads)
    images[:, :, :3, 1] = a_grad[..., 0]
    images[:, :, :3, 2] = a_grad[..., 1]
    # edge fields: state (0, 0, psi_i, div psi_i)
    scale = (mesh.edge_signs * tables["edge_len"]
             / (2.0 * tables["area"])[:, None])         # (nt, 3)
    rel = phys[:, :, None, :] - tables["opp"][:, None, :, :]   # (nt, nq, 3, 2)
    psi = scale[:, None, :, None] * rel
    images[:, :, 3:, 0] = -2.0 * scale[:, None, :]
    images[:, :, 3:, 1] = -psi[..., 0]
    images[:, :, 3:, 2] = -psi[..., 1]
    return images, w_abs, phys


def data_images(problem, phys):
    """F = (f, 0) at the quadrature points, shape (nt, nq, 3)."""
    nt, nq = phys.shape[:2]
    F = np.zeros((nt, nq, 3))
    F[:, :, 0] = problem.f_fn(phys.reshape(-1, 2)).reshape(nt, nq)
    return F


def _scatter_csr(rows, cols, vals, n):
    """Deterministic duplicate summation: lexicographic order, sequential adds."""
    seq = np.arange(len(vals))
    order = np.lexsort((seq, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    new_group = np.ones(len(vals), dtype=bool)
    new_group[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(new_group)
    summed = np.add.reduceat(vals, starts)
    r, c = rows[starts], cols[starts]
    indptr = np.zeros(n + 1, dtype=np.intp)
    np.add.at(indptr, r + 1, 1)
    np.cumsum(indptr, out=indptr)
    return sp.csr_matrix((summed, c, indptr), shape=(n, n))


def assemble_system(mesh, dofmap, problem, quad_order=4):
    """Assemble the least-squares Galerkin matrix and load vector.

    Local contributions are accumulated in element order (then local dof
    order), so reassembling the same inputs reproduces the same matrix bit
    for bit.  The returned matrix is validated to be symmetric positive
    definite by factorizing it once; the factorization stays cached for the
    exact solver.
    """
    if dofmap.n_total > MAX_DOFS:
        raise ValueError(
            f"system size {dofmap.n_total} exceeds the supported maximum {MAX_DOFS}")
    rule = quadrature_rule(quad_order)
    images, w_abs, phys = operator_basis_images(mesh, dofmap, problem, rule)
    local = np.einsum("tqjc,tqkc,tq->tjk", images, images, w_abs)
    F = data_images(problem, phys)
    local_rhs = np.einsum("tqc,tqjc,tq->tj", F, images, w_abs)

    gdofs = dofmap.element_dofs                          # (nt, 6)
    rows = np.repeat(gdofs, 6, axis=1).ravel()
    cols = np.tile(gdofs, (1, 6)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    matrix = _scatter_csr(rows[keep], cols[keep], vals[keep], dofmap.n_total)

    rhs = np.zeros(dofmap.n_total)
    rkeep = gdofs.ravel() >= 0
    np.add.at(rhs, gdofs.ravel()[rkeep], local_rhs.ravel()[rkeep])

    system = SparseSpd(matrix)
    try:
        system.factor()
    except SolverError as exc:
        raise AssemblyValidityError(
            f"assembled matrix failed the positive-definiteness check: {exc}"
        ) from exc
    return system, rhs


def gather_element_coefs(dofmap, coef):
    """Per-element local coefficient vectors (nt, 6); constrained dofs are zero."""
    gdofs = dofmap.element_dofs
    safe = np.clip(gdofs, 0, None)
    return np.where(gdofs >= 0, coef[safe], 0.0)


def discrete_state(mesh, dofmap, coef, rule):
    """Fields of a discrete function at quadrature points.

    Returns (u, grad_u, sigma, div_sigma) with shapes (nt, nq), (nt, nq, 2),
    (nt, nq, 2), (nt, nq).
    """
    tables = geometry_tables(mesh)
    nt = mesh.n_elements
    nq = rule.points.shape[0]
    cf = gather_element_coefs(dofmap, np.asarray(coef, dtype=float))
    u = np.einsum("qj,tj->tq", rule.points, cf[:, :3])
    grad = np.einsum("tjd,tj->td", tables["hat_grads"], cf[:, :3])
    grad = np.broadcast_to(grad[:, None, :], (nt, nq, 2))
    phys, _ = _quad_points(mesh, rule)
    scale = (mesh.edge_signs * tables["edge_len"]
             / (2.0 * tables["area"])[:, None])
    rel = phys[:, :, None, :] - tables["opp"][:, None, :, :]
    sigma = np.einsum("tqid,ti->tqd", rel, scale * cf[:, 3:])
    div = np.broadcast_to((2.0 * scale * cf[:, 3:]).sum(axis=1)[:, None], (nt, nq))
    return u, grad, sigma, div


def eval_discrete(mesh, dofmap, coef, elem, point):
    """Evaluate one discrete function inside one element.

    Returns (u, grad_u, sigma, div_sigma) at the point; the point must lie
    in the closed element.
    """
    coef = np.asarray(coef, dtype=float)
    if coef.shape != (dofmap.n_total,):
        raise ValueError("coefficient vector length does not match the dof map")
    basis = eval_local_basis(mesh, dofmap, elem, point)
    local = np.where(basis.dofs >= 0, coef[np.clip(basis.dofs, 0, None)], 0.0)
    u = float(local[:3] @ basis.hat_values)
    grad = basis.hat_grads.T @ local[:3]
    sigma = basis.rt_values.T @ local[3:]
    div = float(local[3:] @ basis.rt_divs)
    return u, grad, sigma, div

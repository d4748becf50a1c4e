"""Built-in residual estimator and exact-error norms.

The local indicator is the L2 norm of the first-order residual,
eta_T = ||F - L u_h||_T, so the total squares to the least-squares
functional of the discrete solution; no separate data-oscillation term
exists in this setting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import data_images, discrete_state, _quad_points
from .quadrature import quadrature_rule
from .spaces import geometry_tables


@dataclass
class EstimatorReport:
    """Per-element indicators and their l2 total."""

    per_element: np.ndarray
    total: float

    def subset_total(self, element_indices):
        idx = np.asarray(element_indices, dtype=np.intp)
        return float(np.sqrt(np.sum(self.per_element[idx] ** 2)))


@dataclass
class VNormReport:
    """Per-element full-norm errors (H1 for u, H(div) for sigma) and total."""

    per_element: np.ndarray
    total: float

    def subset_total(self, element_indices):
        idx = np.asarray(element_indices, dtype=np.intp)
        return float(np.sqrt(np.sum(self.per_element[idx] ** 2)))


def _residual_squares(mesh, dofmap, problem, coef, rule):
    u, grad, sigma, div = discrete_state(mesh, dofmap, coef, rule)
    phys, w_abs = _quad_points(mesh, rule)
    nt, nq = u.shape
    flat = phys.reshape(-1, 2)
    a_vals = problem.a_fn(flat).reshape(nt, nq, 2, 2)
    b_vals = problem.b_fn(flat).reshape(nt, nq, 2)
    c_vals = problem.c_fn(flat).reshape(nt, nq)
    F = data_images(problem, phys)
    res0 = F[:, :, 0] - (-div + np.sum(b_vals * grad, axis=2) + c_vals * u)
    resv = -(np.einsum("tqde,tqe->tqd", a_vals, grad) - sigma)
    sq = res0 ** 2 + resv[..., 0] ** 2 + resv[..., 1] ** 2
    return np.einsum("tq,tq->t", sq, w_abs)


def compute_indicators(mesh, dofmap, problem, coef, quad_order=6):
    """Element indicators eta_T = ||F - L u_h||_T and their total."""
    rule = quadrature_rule(quad_order)
    squares = _residual_squares(mesh, dofmap, problem, coef, rule)
    squares = np.maximum(squares, 0.0)
    return EstimatorReport(per_element=np.sqrt(squares),
                           total=float(np.sqrt(squares.sum())))


def compute_error_norms(mesh, dofmap, coef, exact, quad_order=6):
    """Errors against a manufactured solution in the natural product norm.

    Per element: ||u - u_h||_{H1(T)}^2 + ||sigma - sigma_h||_{H(div,T)}^2,
    both full norms (values plus derivatives).
    """
    rule = quadrature_rule(quad_order)
    u, grad, sigma, div = discrete_state(mesh, dofmap, coef, rule)
    phys, w_abs = _quad_points(mesh, rule)
    nt, nq = u.shape
    flat = phys.reshape(-1, 2)
    du = exact.u(flat).reshape(nt, nq) - u
    dg = exact.grad_u(flat).reshape(nt, nq, 2) - grad
    ds = exact.sigma(flat).reshape(nt, nq, 2) - sigma
    dd = exact.div_sigma(flat).reshape(nt, nq) - div
    sq = (du ** 2 + dg[..., 0] ** 2 + dg[..., 1] ** 2
          + ds[..., 0] ** 2 + ds[..., 1] ** 2 + dd ** 2)
    squares = np.maximum(np.einsum("tq,tq->t", sq, w_abs), 0.0)
    return VNormReport(per_element=np.sqrt(squares),
                       total=float(np.sqrt(squares.sum())))


def discrete_v_norm(mesh, dofmap, coef, quad_order=4):
    """Product norm of a discrete function (exact for piecewise polynomials)."""
    rule = quadrature_rule(quad_order)
    u, grad, sigma, div = discrete_state(mesh, dofmap, coef, rule)
    _, w_abs = _quad_points(mesh, rule)
    sq = (u ** 2 + grad[..., 0] ** 2 + grad[..., 1] ** 2
          + sigma[..., 0] ** 2 + sigma[..., 1] ** 2 + div ** 2)
    return float(np.sqrt(max(np.einsum("tq,tq->", sq, w_abs), 0.0)))

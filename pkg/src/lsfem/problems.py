"""Problem definitions: first-order reformulations of scalar elliptic PDEs.

The solved system acts on pairs (u, sigma):

    poisson:   L(u, sigma) = (-div sigma,              grad u - sigma)
    general:   L(u, sigma) = (-div sigma + b.grad u + c u,  A grad u - sigma)

with data F = (f, 0) and homogeneous Dirichlet conditions on u.  The
residual F - L(u_h, sigma_h) drives both the solve and the error estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError

_KINDS = ("poisson", "general")
_SPD_SAMPLE = np.stack(np.meshgrid(np.linspace(-1, 1, 7),
                                   np.linspace(-1, 1, 7)), axis=-1).reshape(-1, 2)


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form manufactured solution with all derived fields."""

    u: Callable
    grad_u: Callable
    sigma: Callable
    div_sigma: Callable


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "poisson"
    manufactured: Optional[str] = None
    f: Optional[float] = None
    a: Optional[list] = None
    b: Optional[list] = None
    c: Optional[float] = None
    omega: Optional[float] = None


@dataclass(frozen=True)
class Problem:
    """Coefficient evaluators plus optional exact solution.

    Evaluators are vectorized over point arrays of shape (n, 2):
    a_fn -> (n, 2, 2), b_fn -> (n, 2), c_fn and f_fn -> (n,).
    """

    kind: str
    a_fn: Callable
    b_fn: Callable
    c_fn: Callable
    f_fn: Callable
    exact: Optional[ExactSolution] = None
    spec: Optional[ProblemSpec] = None


@dataclass(frozen=True)
class OperatorValue:
    components: np.ndarray      # (3,): scalar residual row, two vector rows


def _const_matrix(a):
    a = np.asarray(a, dtype=float)

    def fn(pts):
        return np.broadcast_to(a, (len(pts), 2, 2))
    return fn


def _const_vector(b):
    b = np.asarray(b, dtype=float)

    def fn(pts):
        return np.broadcast_to(b, (len(pts), 2))
    return fn


def _const_scalar(c):
    c = float(c)

    def fn(pts):
        return np.full(len(pts), c)
    return fn


def _bubble_exact():
    """u = x(1-x) y(1-y) on the unit square, sigma = grad u."""
    def u(p):
        x, y = p[:, 0], p[:, 1]
        return x * (1 - x) * y * (1 - y)

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([(1 - 2 * x) * y * (1 - y),
                                x * (1 - x) * (1 - 2 * y)])

    def div_sigma(p):
        x, y = p[:, 0], p[:, 1]
        return -2 * y * (1 - y) - 2 * x * (1 - x)

    return ExactSolution(u=u, grad_u=grad, sigma=grad, div_sigma=div_sigma)


def _sine_exact(a, b, c):
    """u = sin(pi x) sin(pi y) with sigma = A grad u for constant A."""
    a = np.asarray(a, dtype=float)

    def u(p):
        return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        return np.pi * np.column_stack([np.cos(np.pi * x) * np.sin(np.pi * y),
                                        np.sin(np.pi * x) * np.cos(np.pi * y)])

    def sigma(p):
        return grad(p) @ a.T

    def div_sigma(p):
        x, y = p[:, 0], p[:, 1]
        ss = np.sin(np.pi * x) * np.sin(np.pi * y)
        cc = np.cos(np.pi * x) * np.cos(np.pi * y)
        return (-np.pi ** 2 * (a[0, 0] + a[1, 1]) * ss
                + np.pi ** 2 * (a[0, 1] + a[1, 0]) * cc)

    return ExactSolution(u=u, grad_u=grad, sigma=sigma, div_sigma=div_sigma)


def _zero_exact():
    def zeros(p):
        return np.zeros(len(p))

    def zeros2(p):
        return np.zeros((len(p), 2))

    return ExactSolution(u=zeros, grad_u=zeros2, sigma=zeros2, div_sigma=zeros)


def _manufactured_f(exact, b, c):
    """Load consistent with the manufactured solution: f = -div sigma + b.grad u + c u."""
    b = np.asarray(b, dtype=float)
    c = float(c)

    def f(pts):
        return (-exact.div_sigma(pts) + exact.grad_u(pts) @ b
                + c * exact.u(pts))
    return f


def make_problem(spec):
    """Build a Problem from a ProblemSpec (or an equivalent dict)."""
    if isinstance(spec, dict):
        unknown = set(spec) - {"kind", "manufactured", "f", "a", "b", "c", "omega"}
        if unknown:
            raise ConfigurationError(
                f"unknown problem key(s): {', '.join(sorted(unknown))}")
        spec = ProblemSpec(**spec)
    if spec.kind not in _KINDS:
        raise ConfigurationError(f"unknown problem kind {spec.kind!r}")

    if spec.kind == "poisson":
        for name in ("a", "b", "c", "omega"):
            if getattr(spec, name) is not None:
                raise ConfigurationError(
                    f"problem key {name!r} is not allowed for kind 'poisson'")
        a, b, c = np.eye(2), np.zeros(2), 0.0
    else:
        if spec.omega is not None and spec.c is not None:
            raise ConfigurationError("give either c or omega, not both")
        a = np.eye(2) if spec.a is None else np.asarray(spec.a, dtype=float)
        b = np.zeros(2) if spec.b is None else np.asarray(spec.b, dtype=float)
        if spec.omega is not None:
            c = -float(spec.omega) ** 2
        else:
            c = 0.0 if spec.c is None else float(spec.c)
        if a.shape != (2, 2):
            raise ConfigurationError("coefficient a must be a 2x2 matrix")
        if b.shape != (2,):
            raise ConfigurationError("coefficient b must be a 2-vector")
        if not np.allclose(a, a.T, atol=1e-14):
            raise ConfigurationError("coefficient a must be symmetric")
        eigs = np.linalg.eigvalsh(a)
        if eigs.min() <= 1e-12:
            raise ConfigurationError(
                f"coefficient a is not uniformly positive definite "
                f"(smallest eigenvalue {eigs.min():.3e})")

    exact = None
    if spec.manufactured is not None:
        if spec.f is not None:
            raise ConfigurationError(
                "manufactured problems derive f; do not give it explicitly")
        if spec.manufactured == "poly_bubble":
            if spec.kind != "poisson":
                raise ConfigurationError(
                    "manufactured case 'poly_bubble' requires kind 'poisson'")
            exact = _bubble_exact()
        elif spec.manufactured == "sine":
            exact = _sine_exact(a, b, c)
        elif spec.manufactured == "zero":
            exact = _zero_exact()
        else:
            raise ConfigurationError(
                f"unknown manufactured case {spec.manufactured!r}")
        f_fn = _manufactured_f(exact, b, c)
    else:
        if spec.f is None:
            raise ConfigurationError(
                "problem needs either a load f or a manufactured case")
        try:
            f_val = float(spec.f)
        except (TypeError, ValueError):
            raise ConfigurationError(f"load f must be a number, got {spec.f!r}")
        f_fn = _const_scalar(f_val)

    problem = Problem(kind=spec.kind, a_fn=_const_matrix(a),
                      b_fn=_const_vector(b), c_fn=_const_scalar(c),
                      f_fn=f_fn, exact=exact, spec=spec)
    if exact is not None:
        _check_manufactured(problem)
    return problem


def _check_manufactured(problem, n=100, tol=1e-10, seed=20240517):
    """Self-check: -div sigma + b.grad u + c u reproduces f at random points."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.05, 0.95, size=(n, 2))
    ex = problem.exact
    lhs = (-ex.div_sigma(pts) + np.sum(problem.b_fn(pts) * ex.grad_u(pts), axis=1)
           + problem.c_fn(pts) * ex.u(pts))
    f = problem.f_fn(pts)
    scale = max(1.0, float(np.abs(f).max()))
    worst = float(np.abs(lhs - f).max()) / scale
    if worst > tol:
        raise ConfigurationError(
            f"manufactured solution is inconsistent with its load "
            f"(relative defect {worst:.3e})")


def eval_operator(problem, x, state):
    """Apply the first-order operator to one state tuple at one point.

    ``state`` is (u, grad_u, sigma, div_sigma) with grad_u and sigma
    2-vectors.  Returns the three operator components.
    """
    u, grad_u, sigma, div_sigma = state
    pts = np.asarray(x, dtype=float).reshape(1, 2)
    grad_u = np.asarray(grad_u, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    a = problem.a_fn(pts)[0]
    b = problem.b_fn(pts)[0]
    c = problem.c_fn(pts)[0]
    scalar = -float(div_sigma) + float(b @ grad_u) + c * float(u)
    vector = a @ grad_u - sigma
    return OperatorValue(components=np.array([scalar, vector[0], vector[1]]))


def eval_data(problem, x):
    """The right-hand side F = (f, 0) at one point."""
    pts = np.asarray(x, dtype=float).reshape(1, 2)
    return OperatorValue(
        components=np.array([float(problem.f_fn(pts)[0]), 0.0, 0.0]))

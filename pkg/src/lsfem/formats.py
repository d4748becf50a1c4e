"""On-disk formats: YAML run configs, history CSV, mesh text files, VTK.

All float output uses ``%.17g`` so that written values round-trip exactly
through text.
"""

from __future__ import annotations

import csv
import io
import os

import numpy as np
import yaml

from .driver import (AdaptiveConfig, HistoryRow, QuadSpec, SolverSpec,
                     StopSpec)
from .errors import ConfigurationError
from .marking import MarkingSpec
from .mesh import Mesh
from .problems import ProblemSpec

HISTORY_HEADER = ("level,n_elements,n_dofs,eta_total,error_V,marked_count,"
                  "solver_iterations,wall_time_s")

_HISTORY_FIELDS = HISTORY_HEADER.split(",")


def _fmt(x):
    return "%.17g" % float(x)


def _reject_unknown(section, data, allowed):
    extra = set(data) - set(allowed)
    if extra:
        raise ConfigurationError(
            f"unknown key(s) in {section}: {sorted(extra)}")


def _as_float(section, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{section}.{key} must be a number")
    return float(value)


def _as_int(section, key, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{section}.{key} must be an integer")
    return int(value)


def _parse_problem(data):
    if not isinstance(data, dict):
        raise ConfigurationError("problem section must be a mapping")
    _reject_unknown("problem", data,
                    ("kind", "manufactured", "f", "a", "b", "c", "omega"))
    if "kind" not in data:
        raise ConfigurationError("problem.kind is required")
    kind = data["kind"]
    if not isinstance(kind, str):
        raise ConfigurationError("problem.kind must be a string")
    manufactured = data.get("manufactured")
    if manufactured is not None and not isinstance(manufactured, str):
        raise ConfigurationError("problem.manufactured must be a string")
    f = data.get("f")
    if f is not None:
        f = _as_float("problem", "f", f)
    a = data.get("a")
    if a is not None:
        arr = np.asarray(a, dtype=float)
        if arr.shape != (2, 2):
            raise ConfigurationError("problem.a must be a 2x2 matrix")
        a = tuple(tuple(row) for row in arr.tolist())
    b = data.get("b")
    if b is not None:
        arr = np.asarray(b, dtype=float)
        if arr.shape != (2,):
            raise ConfigurationError("problem.b must be a 2-vector")
        b = tuple(arr.tolist())
    c = data.get("c")
    if c is not None:
        c = _as_float("problem", "c", c)
    omega = data.get("omega")
    if omega is not None:
        omega = _as_float("problem", "omega", omega)
    return ProblemSpec(kind=kind, manufactured=manufactured, f=f, a=a, b=b,
                       c=c, omega=omega)


def _parse_marking(data):
    if data is None:
        return MarkingSpec()
    if not isinstance(data, dict):
        raise ConfigurationError("marking section must be a mapping")
    _reject_unknown("marking", data, ("strategy", "theta"))
    kwargs = {}
    if "strategy" in data:
        if not isinstance(data["strategy"], str):
            raise ConfigurationError("marking.strategy must be a string")
        kwargs["strategy"] = data["strategy"]
    if "theta" in data:
        kwargs["theta"] = _as_float("marking", "theta", data["theta"])
    return MarkingSpec(**kwargs)


def _parse_solver(data):
    if data is None:
        return SolverSpec()
    if not isinstance(data, dict):
        raise ConfigurationError("solver section must be a mapping")
    _reject_unknown("solver", data, ("kind", "precond", "n_steps", "lam",
                                     "eta_ref", "nested", "max_steps"))
    kwargs = {}
    if "kind" in data:
        if not isinstance(data["kind"], str):
            raise ConfigurationError("solver.kind must be a string")
        kwargs["kind"] = data["kind"]
    if "precond" in data:
        if not isinstance(data["precond"], str):
            raise ConfigurationError("solver.precond must be a string")
        kwargs["precond"] = data["precond"]
    if data.get("n_steps") is not None:
        kwargs["n_steps"] = _as_int("solver", "n_steps", data["n_steps"])
    if data.get("lam") is not None:
        kwargs["lam"] = _as_float("solver", "lam", data["lam"])
    if "eta_ref" in data:
        if not isinstance(data["eta_ref"], str):
            raise ConfigurationError("solver.eta_ref must be a string")
        kwargs["eta_ref"] = data["eta_ref"]
    if "nested" in data:
        if not isinstance(data["nested"], bool):
            raise ConfigurationError("solver.nested must be a boolean")
        kwargs["nested"] = data["nested"]
    if "max_steps" in data:
        kwargs["max_steps"] = _as_int("solver", "max_steps", data["max_steps"])
    return SolverSpec(**kwargs)


def _parse_quadrature(data):
    if data is None:
        return QuadSpec()
    if not isinstance(data, dict):
        raise ConfigurationError("quadrature section must be a mapping")
    _reject_unknown("quadrature", data, ("assembly_order", "estimator_order"))
    kwargs = {}
    if "assembly_order" in data:
        kwargs["assembly_order"] = _as_int("quadrature", "assembly_order",
                                           data["assembly_order"])
    if data.get("estimator_order") is not None:
        kwargs["estimator_order"] = _as_int("quadrature", "estimator_order",
                                            data["estimator_order"])
    return QuadSpec(**kwargs)


def _parse_stop(data):
    if data is None:
        return StopSpec()
    if not isinstance(data, dict):
        raise ConfigurationError("stop section must be a mapping")
    _reject_unknown("stop", data, ("max_ndof", "max_levels", "eta_tol"))
    kwargs = {}
    if "max_ndof" in data:
        kwargs["max_ndof"] = _as_int("stop", "max_ndof", data["max_ndof"])
    if "max_levels" in data:
        kwargs["max_levels"] = _as_int("stop", "max_levels", data["max_levels"])
    if "eta_tol" in data:
        kwargs["eta_tol"] = _as_float("stop", "eta_tol", data["eta_tol"])
    return StopSpec(**kwargs)


def config_from_dict(data):
    """Build a validated run configuration from plain nested dicts."""
    if not isinstance(data, dict):
        raise ConfigurationError("top-level config must be a mapping")
    _reject_unknown("config", data,
                    ("domain", "problem", "marking", "theta_schedule",
                     "solver", "quadrature", "stop"))
    if "domain" not in data:
        raise ConfigurationError("config.domain is required")
    if not isinstance(data["domain"], str):
        raise ConfigurationError("config.domain must be a string")
    if "problem" not in data:
        raise ConfigurationError("config.problem is required")
    schedule = data.get("theta_schedule")
    if schedule is not None:
        if not isinstance(schedule, (list, tuple)) or not schedule:
            raise ConfigurationError("theta_schedule must be a non-empty list")
        schedule = tuple(_as_float("theta_schedule", str(i), v)
                         for i, v in enumerate(schedule))
    return AdaptiveConfig(
        domain=data["domain"],
        problem=_parse_problem(data["problem"]),
        marking=_parse_marking(data.get("marking")),
        theta_schedule=schedule,
        solver=_parse_solver(data.get("solver")),
        quadrature=_parse_quadrature(data.get("quadrature")),
        stop=_parse_stop(data.get("stop")),
    )


def parse_config(path):
    """Read a YAML run configuration from disk."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"malformed YAML in {path}: {exc}") from exc
    if data is None:
        raise ConfigurationError(f"empty config file: {path}")
    return config_from_dict(data)


def config_to_dict(config):
    """Inverse of ``config_from_dict`` (round-trips through YAML)."""
    problem = {"kind": config.problem.kind}
    for key in ("manufactured", "f", "a", "b", "c", "omega"):
        value = getattr(config.problem, key)
        if value is not None:
            if key == "a":
                value = [list(row) for row in value]
            elif key == "b":
                value = list(value)
            problem[key] = value
    data = {
        "domain": config.domain,
        "problem": problem,
        "marking": {"strategy": config.marking.strategy,
                    "theta": config.marking.theta},
        "solver": {"kind": config.solver.kind,
                   "precond": config.solver.precond,
                   "eta_ref": config.solver.eta_ref,
                   "nested": config.solver.nested,
                   "max_steps": config.solver.max_steps},
        "quadrature": {"assembly_order": config.quadrature.assembly_order},
        "stop": {"max_ndof": config.stop.max_ndof,
                 "max_levels": config.stop.max_levels,
                 "eta_tol": config.stop.eta_tol},
    }
    if config.theta_schedule is not None:
        data["theta_schedule"] = list(config.theta_schedule)
    if config.solver.n_steps is not None:
        data["solver"]["n_steps"] = config.solver.n_steps
    if config.solver.lam is not None:
        data["solver"]["lam"] = config.solver.lam
    if config.quadrature.estimator_order is not None:
        data["quadrature"]["estimator_order"] = config.quadrature.estimator_order
    return data


def serialize_config(config):
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


# -- history CSV ---------------------------------------------------------------

def _row_to_strings(row, strip_timing=False):
    error = "" if row.error_v is None else _fmt(row.error_v)
    if strip_timing or row.wall_time_s is None:
        wall = ""
    else:
        wall = _fmt(row.wall_time_s)
    return [str(row.level), str(row.n_elements), str(row.n_dofs),
            _fmt(row.eta_total), error, str(row.marked_count),
            str(row.solver_iterations), wall]


class HistoryWriter:
    """Streaming CSV writer that emits one line per adaptive level."""

    def __init__(self, path, strip_timing=False):
        self.path = path
        self.strip_timing = strip_timing
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._fh.write(HISTORY_HEADER + "\n")
        self._fh.flush()

    def append(self, row):
        self._fh.write(",".join(_row_to_strings(row, self.strip_timing)) + "\n")
        self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def write_history(path, rows, strip_timing=False):
    """Write a complete run history; accepts rows or a history object."""
    rows = getattr(rows, "rows", rows)
    with HistoryWriter(path, strip_timing=strip_timing) as writer:
        for row in rows:
            writer.append(row)


def read_history(path):
    """Parse a history CSV back into rows (blank fields become None)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"empty history file: {path}")
        if header != _HISTORY_FIELDS:
            raise ConfigurationError(
                f"unexpected history header in {path}: {','.join(header)}")
        rows = []
        for record in reader:
            if not record:
                continue
            if len(record) != len(_HISTORY_FIELDS):
                raise ConfigurationError(
                    f"bad history record in {path}: {record}")
            try:
                rows.append(HistoryRow(
                    level=int(record[0]),
                    n_elements=int(record[1]),
                    n_dofs=int(record[2]),
                    eta_total=float(record[3]),
                    error_v=None if record[4] == "" else float(record[4]),
                    marked_count=int(record[5]),
                    solver_iterations=int(record[6]),
                    wall_time_s=None if record[7] == "" else float(record[7]),
                ))
            except ValueError as exc:
                raise ConfigurationError(
                    f"bad history record in {path}: {record} ({exc})") from exc
    return rows


# -- mesh text format ------------------------------------------------------------

def write_mesh_text(path, mesh):
    """Vertex/element listing; the stored vertex order fixes refinement edges."""
    buf = io.StringIO()
    buf.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
    for x, y in mesh.vertices:
        buf.write(f"{_fmt(x)} {_fmt(y)}\n")
    for tri in mesh.elements:
        buf.write(f"{tri[0]} {tri[1]} {tri[2]}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def read_mesh_text(path):
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ConfigurationError(f"truncated mesh file: {path}")
    try:
        nv, nt = int(tokens[0]), int(tokens[1])
        expected = 2 + 2 * nv + 3 * nt
        if len(tokens) != expected:
            raise ValueError(f"expected {expected} tokens, found {len(tokens)}")
        coords = np.array(tokens[2:2 + 2 * nv], dtype=float).reshape(nv, 2)
        elems = np.array(tokens[2 + 2 * nv:], dtype=int).reshape(nt, 3)
    except ValueError as exc:
        raise ConfigurationError(f"malformed mesh file {path}: {exc}") from exc
    return Mesh(coords, elems)


# -- VTK export --------------------------------------------------------------------

def write_vtk(path, mesh, eta=None, title="adaptive solve"):
    """Legacy ASCII VTK unstructured grid with per-element indicators."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    nt = mesh.n_elements
    lines.append(f"CELLS {nt} {4 * nt}")
    for tri in mesh.elements:
        lines.append(f"3 {tri[0]} {tri[1]} {tri[2]}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    if eta is not None:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (nt,):
            raise ValueError("eta must hold one value per element")
        lines.append(f"CELL_DATA {nt}")
        lines.append("SCALARS eta double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in eta)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path

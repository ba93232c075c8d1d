"""Experiment drivers: interface-position sweeps written as CSV artifacts.

A sweep point runs the full chain (level set, partition, enrichment,
assembly, scaling, constrained solve) for one interface position. The bar
sweep additionally tracks two focus DOFs of the intersected element; the
circle sweep records condition numbers, area ratios, solution errors
against a same-mesh direct reference, and GMRES iteration counts per
solver preconditioner.

Direct solutions are trusted only while the LU pivot spread stays below
1e12; beyond that the reference solution is treated as unavailable and
dependent quantities are left blank, while the row is flagged.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assembly import (BoundaryConditions, MaterialSpec, Nitsche,
                       StabilizedLagrange, assemble, jacobian, residual)
from .cutcell import partition_all
from .diagnostics import SweepRecord, condition_number, min_area_ratio
from .enrichment import build_enrichment
from .levelset import Circle, VerticalPlane, build_levelset
from .mesh import build_structured_mesh
from .precond import (build_tb, build_tjac, build_tn, make_preconditioner,
                      transform_system)
from .solver import (LinearProblem, SingularMatrixError, SolverConfig,
                     factorize, gmres_solve, make_solver_preconditioner,
                     newton_solve)

TRUST_PIVOT_RATIO = 1e12
FLOAT_FMT = ".17g"

BAR_COLUMNS = ["r_over_L", "cond", "A_min", "T_focus1", "T_focus2",
               "Jtilde_diag1", "Jtilde_diag2", "uhat_focus1", "uhat_focus2",
               "utilde_focus1", "utilde_focus2", "n_constrained", "failed"]
CIRCLE_COLUMNS = ["r", "method", "precond_kind", "T_tol", "cond", "A_min",
                  "e_L2", "n_itr_none", "n_itr_jac", "n_itr_ilu",
                  "gmres_failed", "n_constrained", "dofs"]


class ConfigError(ValueError):
    """Experiment configuration is malformed."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    nx: int
    ny: int
    bounds: tuple
    geometry_kind: str            # "vertical_plane" | "circle"
    circle_center: tuple = (0.0, 0.0)
    geometry_r: float = math.nan  # fixed interface position (single solve)
    sweep_start: float = math.nan
    sweep_stop: float = math.nan
    sweep_step: float = math.nan
    sweep_extra: tuple = ()
    k1: float = 1.0
    k2: float = 1.0
    dirichlet: tuple = ()
    neumann: tuple = ()
    method_kind: str = "stabilized_lagrange"
    gamma: float | None = None    # None = k1+k2 resp. 1e-3*(k1+k2)
    precond_kind: str = "TB"
    t_tol: float = math.inf
    gmres_tol: float = 1e-6
    gmres_max_iter: int | None = None
    gmres_restart: int | None = None
    ilu_pivot_guard: float = 1e-2
    iterative_variants: tuple = ()  # subset of ("none", "jac", "ilu")
    compute_cond: bool = True
    compute_e_l2: bool = False
    output: str = "sweep.csv"
    threads: int = 1

    @property
    def material(self) -> MaterialSpec:
        return MaterialSpec(self.k1, self.k2)

    @property
    def bcs(self) -> BoundaryConditions:
        return BoundaryConditions(dirichlet=self.dirichlet, neumann=self.neumann)

    @property
    def method(self):
        g = self.gamma
        if self.method_kind == "stabilized_lagrange":
            return StabilizedLagrange(g if g is not None else self.k1 + self.k2)
        if self.method_kind == "nitsche":
            return Nitsche(g if g is not None else 1e-3 * (self.k1 + self.k2))
        raise ConfigError(f"unknown constraint method {self.method_kind!r}")

    def geometry(self, r: float):
        if self.geometry_kind == "vertical_plane":
            return VerticalPlane(r)
        if self.geometry_kind == "circle":
            return Circle(tuple(self.circle_center), r)
        raise ConfigError(f"unknown geometry {self.geometry_kind!r}")

    def sweep_values(self) -> list:
        if not (self.sweep_step > 0):
            raise ConfigError("sweep step must be positive")
        n = int(round((self.sweep_stop - self.sweep_start) / self.sweep_step))
        vals = [self.sweep_start + k * self.sweep_step for k in range(n + 1)]
        vals.extend(float(x) for x in self.sweep_extra)
        return sorted(set(vals))


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a nested config mapping (parsed YAML) into a flat config."""
    try:
        mesh = raw["mesh"]
        geom = raw["geometry"]
        kwargs = dict(
            experiment=raw["experiment"],
            nx=int(mesh["nx"]), ny=int(mesh["ny"]),
            bounds=tuple(float(b) for b in mesh["bounds"]),
            geometry_kind=geom["kind"],
        )
        if "center" in geom:
            kwargs["circle_center"] = tuple(float(c) for c in geom["center"])
        if "r" in geom:
            kwargs["geometry_r"] = float(geom["r"])
        if "sweep" in raw:
            sweep = raw["sweep"]
            kwargs.update(sweep_start=float(sweep["start"]),
                          sweep_stop=float(sweep["stop"]),
                          sweep_step=float(sweep["step"]),
                          sweep_extra=tuple(float(x)
                                            for x in sweep.get("extra", [])))
        mat = raw.get("material", {})
        kwargs.update(k1=float(mat.get("k1", 1.0)), k2=float(mat.get("k2", 1.0)))
        bcs = raw.get("bcs", {})
        kwargs["dirichlet"] = tuple((d["tag"], float(d["value"]))
                                    for d in bcs.get("dirichlet", []))
        kwargs["neumann"] = tuple((d["tag"], float(d["value"]))
                                  for d in bcs.get("neumann", []))
        method = raw.get("method", {})
        kwargs["method_kind"] = method.get("kind", "stabilized_lagrange")
        if method.get("gamma") is not None:
            kwargs["gamma"] = float(method["gamma"])
        pre = raw.get("precond", {})
        kwargs["precond_kind"] = pre.get("kind", "TB")
        kwargs["t_tol"] = float(pre.get("t_tol", math.inf))
        sol = raw.get("solver", {})
        kwargs.update(
            gmres_tol=float(sol.get("gmres_tol", 1e-6)),
            gmres_max_iter=(int(sol["gmres_max_iter"])
                            if sol.get("gmres_max_iter") else None),
            gmres_restart=(int(sol["restart"]) if sol.get("restart") else None),
            ilu_pivot_guard=float(sol.get("ilu_pivot_guard", 1e-2)),
            iterative_variants=tuple(sol.get("iterative_variants", [])),
        )
        kwargs["compute_cond"] = bool(raw.get("compute_cond", True))
        kwargs["compute_e_l2"] = bool(raw.get("compute_e_l2", False))
        kwargs["output"] = str(raw.get("output", "sweep.csv"))
        kwargs["threads"] = int(raw.get("threads", 1))
        cfg = ExperimentConfig(**kwargs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc
    if cfg.experiment not in ("bar_sweep", "circle_sweep", "single_solve"):
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    if cfg.precond_kind not in ("identity", "TN", "TB", "Tjac"):
        raise ConfigError(f"unknown preconditioner kind {cfg.precond_kind!r}")
    if cfg.precond_kind == "Tjac" and not math.isinf(cfg.t_tol):
        raise ConfigError("Tjac is a solver-side scaling; constraining "
                          "requires a geometric kind (use t_tol: inf)")
    for v in cfg.iterative_variants:
        if v not in ("none", "jac", "ilu"):
            raise ConfigError(f"unknown iterative variant {v!r}")
    if cfg.experiment != "single_solve" and math.isnan(cfg.sweep_start):
        raise ConfigError("sweep experiments need a sweep section")
    if cfg.experiment == "single_solve" and math.isnan(cfg.geometry_r):
        raise ConfigError("single_solve needs geometry.r")
    return cfg


@dataclass
class Pipeline:
    """Everything derived from one interface position."""
    mesh: object
    field: object
    parts: list
    table: object
    sys: object


def build_pipeline(mesh, geom, material, bcs, method) -> Pipeline:
    field = build_levelset(mesh, geom)
    parts = partition_all(mesh, field.phi)
    table = build_enrichment(mesh, parts)
    sys = assemble(mesh, field, parts, table, material, bcs, method)
    return Pipeline(mesh, field, parts, table, sys)


def make_scaling(kind: str, pipe: Pipeline):
    """Scaling vector for one preconditioner kind (Tjac reads the Jacobian)."""
    if kind == "identity":
        return np.ones(pipe.table.total_dofs)
    if kind == "TN":
        return build_tn(pipe.mesh, pipe.parts, pipe.table)
    if kind == "TB":
        return build_tb(pipe.mesh, pipe.parts, pipe.table)
    if kind == "Tjac":
        return build_tjac(jacobian(pipe.sys))
    raise ConfigError(f"unknown preconditioner kind {kind!r}")


def make_point_preconditioner(pipe: Pipeline, kind: str, t_tol: float):
    """Scaling plus constrained set; identity runs still mark by the
    gradient-type geometric scaling."""
    diag = make_scaling(kind, pipe)
    basis = None
    if kind == "identity" and not math.isinf(t_tol):
        basis = build_tb(pipe.mesh, pipe.parts, pipe.table)
    return make_preconditioner(diag, kind, t_tol=t_tol, constrain_diag=basis)


def transformed_from_zero(pipe: Pipeline, P):
    """First-iteration transformed system (zero initial guess + BC values)."""
    u0 = pipe.sys.apply_dirichlet(np.zeros(pipe.sys.ndof))
    r = residual(pipe.sys, u0)
    return transform_system(r, jacobian(pipe.sys), P, pipe.sys.dirichlet_dofs)


def identity_pivot_ratio(pipe: Pipeline) -> float:
    """LU pivot spread of the untransformed free system (trust proxy)."""
    jac = jacobian(pipe.sys)
    free = pipe.sys.free_dofs
    try:
        return factorize(jac[free][:, free].tocsc()).pivot_ratio
    except SingularMatrixError:
        return math.inf


def scan_spike_radii(cfg: ExperimentConfig, threshold: float = 1e-6) -> list:
    """Sweep positions whose minimum area ratio drops below the threshold.

    Partition-only scan over the full sweep grid; used to make sure the
    worst intersections are present in coarsened sweeps.
    """
    mesh = build_structured_mesh(cfg.nx, cfg.ny, cfg.bounds)
    spikes = []
    for r in cfg.sweep_values():
        geom = cfg.geometry(_bar_r(cfg, r) if cfg.experiment == "bar_sweep" else r)
        parts = partition_all(mesh, build_levelset(mesh, geom).phi)
        a_min = min_area_ratio(parts, symmetrized=True)
        if not math.isnan(a_min) and a_min < threshold:
            spikes.append(r)
    return spikes


def _bar_r(cfg: ExperimentConfig, r_over_l: float) -> float:
    return r_over_l * (cfg.bounds[1] - cfg.bounds[0])


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format(value, FLOAT_FMT)
    return str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _bar_point(cfg: ExperimentConfig, r_over_l: float) -> dict:
    mesh = build_structured_mesh(cfg.nx, cfg.ny, cfg.bounds)
    pipe = build_pipeline(mesh, cfg.geometry(_bar_r(cfg, r_over_l)),
                          cfg.material, cfg.bcs, cfg.method)
    row = {c: math.nan for c in BAR_COLUMNS}
    row["r_over_L"] = r_over_l
    row["A_min"] = min_area_ratio(pipe.parts)

    # focus DOFs of the middle element: inclusion-side DOF of its left node,
    # matrix-side DOF of its right node
    e_mid = (cfg.nx // 2) + (cfg.ny // 2) * cfg.nx
    nodes = mesh.element_nodes[e_mid]
    focus = [(int(nodes[0]), 2), (int(nodes[1]), 1)]

    try:
        P = make_point_preconditioner(pipe, cfg.precond_kind, cfg.t_tol)
    except ValueError:
        row.update(failed=True)
        return row
    row["n_constrained"] = P.n_constrained

    failed = False
    try:
        res = newton_solve(LinearProblem(pipe.sys), P)
    except SingularMatrixError:
        res = None
        failed = True
    if cfg.precond_kind == "identity" and not failed:
        failed = identity_pivot_ratio(pipe) > TRUST_PIVOT_RATIO

    ts = res.transformed if res else transformed_from_zero(pipe, P)
    if cfg.compute_cond:
        row["cond"] = condition_number(ts.j)

    kept_pos = {int(d): i for i, d in enumerate(ts.kept)}
    jdiag = ts.j.diagonal()
    for slot, (node, phase) in enumerate(focus, start=1):
        dofs = pipe.table.dofs_at(node, phase)
        if not dofs:
            row[f"T_focus{slot}"] = math.nan
            row[f"uhat_focus{slot}"] = 0.0
            row[f"utilde_focus{slot}"] = 0.0
            row[f"Jtilde_diag{slot}"] = math.nan
            continue
        d = dofs[0]
        row[f"T_focus{slot}"] = P.diag[d]
        row[f"Jtilde_diag{slot}"] = (jdiag[kept_pos[d]] if d in kept_pos
                                     else math.nan)
        row[f"uhat_focus{slot}"] = res.u_hat[d] if res else math.nan
        row[f"utilde_focus{slot}"] = res.u_tilde[d] if res else math.nan
    row["failed"] = failed
    return row


def run_bar_sweep(cfg: ExperimentConfig, output=None) -> list:
    rows = _map_sweep(cfg, _bar_point)
    write_csv(output or cfg.output, BAR_COLUMNS, rows)
    return rows


def _circle_point(cfg: ExperimentConfig, r: float) -> dict:
    mesh = build_structured_mesh(cfg.nx, cfg.ny, cfg.bounds)
    pipe = build_pipeline(mesh, cfg.geometry(r), cfg.material, cfg.bcs,
                          cfg.method)
    row = {c: math.nan for c in CIRCLE_COLUMNS}
    row.update(r=r, method=cfg.method_kind, precond_kind=cfg.precond_kind,
               T_tol=cfg.t_tol, A_min=min_area_ratio(pipe.parts),
               dofs=pipe.table.total_dofs, gmres_failed="", e_L2=None,
               n_itr_none=None, n_itr_jac=None, n_itr_ilu=None)

    try:
        P = make_point_preconditioner(pipe, cfg.precond_kind, cfg.t_tol)
    except ValueError:
        # non-positive Jacobian diagonal (Tjac at extreme slivers)
        row.update(n_constrained=None, gmres_failed="scaling")
        return row
    row["n_constrained"] = P.n_constrained

    res = None
    try:
        res = newton_solve(LinearProblem(pipe.sys), P)
    except SingularMatrixError:
        row["gmres_failed"] = "direct"
    ts = res.transformed if res else transformed_from_zero(pipe, P)
    if cfg.compute_cond:
        row["cond"] = condition_number(ts.j)

    if cfg.compute_e_l2 and res is not None:
        trusted = identity_pivot_ratio(pipe) <= TRUST_PIVOT_RATIO
        if trusted:
            ref = newton_solve(LinearProblem(pipe.sys))
            row["e_L2"] = float(np.linalg.norm(res.u_hat - ref.u_hat))
        else:
            row["e_L2"] = None
    else:
        row["e_L2"] = None

    if cfg.iterative_variants:
        ts0 = transformed_from_zero(pipe, P)
        b = -ts0.r
        solver_cfg = SolverConfig(method="gmres", gmres_tol=cfg.gmres_tol,
                                  gmres_max_iter=cfg.gmres_max_iter,
                                  restart=cfg.gmres_restart,
                                  ilu_pivot_guard=cfg.ilu_pivot_guard)
        failures = [row["gmres_failed"]] if row["gmres_failed"] else []
        names = {"none": None, "jac": "jacobi", "ilu": "ilu0"}
        for variant in cfg.iterative_variants:
            col = f"n_itr_{variant}"
            try:
                M = make_solver_preconditioner(ts0.j, names[variant],
                                               cfg.ilu_pivot_guard)
                gm = gmres_solve(ts0.j, b, solver_cfg, M)
            except SingularMatrixError:
                failures.append(variant)
                continue
            row[col] = gm.n_itr
            if not gm.converged:
                failures.append(variant)
        row["gmres_failed"] = ";".join(failures)
    return row


_RECORD_FIELDS = dict(zip(
    ["r", "method", "precond_kind", "t_tol", "cond", "a_min", "e_l2",
     "n_itr_none", "n_itr_jac", "n_itr_ilu", "gmres_failed", "n_constrained",
     "dofs"], CIRCLE_COLUMNS))


def circle_records(rows) -> list:
    """Rows as typed records (fields mirror the CSV columns)."""
    return [SweepRecord(**{f: row[c] for f, c in _RECORD_FIELDS.items()})
            for row in rows]


def run_circle_sweep(cfg: ExperimentConfig, output=None) -> list:
    rows = _map_sweep(cfg, _circle_point)
    write_csv(output or cfg.output, CIRCLE_COLUMNS, rows)
    return rows


def _sweep_worker(args):
    cfg, point_fn_name, value = args
    fn = {"bar": _bar_point, "circle": _circle_point}[point_fn_name]
    return fn(cfg, value)


def _map_sweep(cfg: ExperimentConfig, point_fn) -> list:
    values = cfg.sweep_values()
    name = "bar" if point_fn is _bar_point else "circle"
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(_sweep_worker,
                                 [(cfg, name, v) for v in values]))
    else:
        rows = [point_fn(cfg, v) for v in values]
    key = "r_over_L" if name == "bar" else "r"
    rows.sort(key=lambda row: row[key])
    return rows


def run_single_solve(cfg: ExperimentConfig, output=None) -> dict:
    """One assembled solve; writes per-DOF solution values plus a summary."""
    mesh = build_structured_mesh(cfg.nx, cfg.ny, cfg.bounds)
    pipe = build_pipeline(mesh, cfg.geometry(cfg.geometry_r), cfg.material,
                          cfg.bcs, cfg.method)
    P = make_point_preconditioner(pipe, cfg.precond_kind, cfg.t_tol)
    solver_cfg = SolverConfig()
    if cfg.iterative_variants:
        names = {"none": None, "jac": "jacobi", "ilu": "ilu0"}
        solver_cfg = SolverConfig(method="gmres", gmres_tol=cfg.gmres_tol,
                                  gmres_max_iter=cfg.gmres_max_iter,
                                  restart=cfg.gmres_restart,
                                  solver_precond=names[cfg.iterative_variants[0]],
                                  ilu_pivot_guard=cfg.ilu_pivot_guard)
    res = newton_solve(LinearProblem(pipe.sys), P, solver=solver_cfg)

    table = pipe.table
    columns = ["dof", "node", "x", "y", "phase", "level", "value", "scaling"]
    rows = []
    for d in range(table.total_dofs):
        node = int(table.dof_node[d])
        rows.append({
            "dof": d, "node": node,
            "x": float(mesh.node_coords[node, 0]),
            "y": float(mesh.node_coords[node, 1]),
            "phase": int(table.dof_phase[d]),
            "level": int(table.dof_level[d]),
            "value": float(res.u_hat[d]),
            "scaling": float(P.diag[d]),
        })
    write_csv(output or cfg.output, columns, rows)
    return {
        "dofs": table.total_dofs,
        "n_constrained": int(P.n_constrained),
        "n_newton": res.n_iterations,
        "converged": bool(res.converged),
        "residual_norm": res.residual_norms[-1],
        "cond": (condition_number(res.transformed.j) if cfg.compute_cond
                 else None),
        "n_gmres": res.gmres.n_itr if res.gmres else None,
    }

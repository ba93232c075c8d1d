"""Acceptance gate: one pass/fail line per criterion.

The circular-inclusion studies share a module-scoped sweep (coarsened grid
plus every small-intersection radius found by the area-ratio scan); the
trade-off study uses a slightly coarser grid of its own. Everything is
deterministic, so reruns reproduce the same numbers.
"""

import math
import sys
import time

import numpy as np
import pytest

from test_enrichment import brute_force_level_counts

from xfemp.assembly import (BoundaryConditions, MaterialSpec, Nitsche,
                            StabilizedLagrange, assemble, jacobian, residual)
from xfemp.cutcell import partition_all, partition_element, phase_area
from xfemp.diagnostics import (condition_number, evaluate_solution,
                               integrate_over_sweep, l2_relative_error,
                               min_area_ratio, probe_grid)
from xfemp.enrichment import build_enrichment
from xfemp.levelset import (Circle, VerticalPlane, build_levelset,
                            sample_signed_distance)
from xfemp.mesh import build_structured_mesh, shape_values
from xfemp.precond import (build_tb, build_tjac, make_preconditioner,
                           transform_system)
from xfemp.solver import (LinearProblem, SingularMatrixError, SolverConfig,
                          gmres_solve, make_solver_preconditioner,
                          newton_solve)
from xfemp.experiments import (ExperimentConfig, build_pipeline,
                               config_from_dict, identity_pivot_ratio,
                               make_point_preconditioner, scan_spike_radii,
                               transformed_from_zero, TRUST_PIVOT_RATIO)

BAR_BCS = BoundaryConditions(dirichlet=(("left", 0.0), ("right", 1.0)))
CIRCLE_BCS = BoundaryConditions(dirichlet=(("left", 0.0), ("right", 100.0)))
CIRCLE_MATERIAL = MaterialSpec(2.0, 2.0e3)
GAMMA_S = 2002.0
GAMMA_N = 2.002

SWEEP_STEP = 0.1          # coarsened from 0.02; spike radii are added back
TRADEOFF_STEP = 0.2
SPIKE_THRESHOLD = 1e-6
IDENT_T_TOLS = [1e8, 1e6, 1e4, 1e2, 10.0]
TB_T_TOLS = [1e4, 1e6, 1e8]
GMRES_CFG = SolverConfig(method="gmres", gmres_tol=1e-6, ilu_pivot_guard=1e-2)


def report(name, ok, detail):
    print(f"ACCEPTANCE {'PASS' if ok else 'FAIL'} - {name}: {detail}",
          file=sys.stderr)
    assert ok, f"{name}: {detail}"


def bar_exact(x, r, k1=1.0, k2=2.0, length=5.0):
    q = 1.0 / (r / k1 + (length - r) / k2)
    return q * x / k1 if x <= r else q * r / k1 + q * (x - r) / k2


def circle_radii(step):
    base = [3.0 + k * step for k in range(int(round(4.0 / step)) + 1)]
    return base


def _circle_cfg(step):
    return config_from_dict({
        "experiment": "circle_sweep",
        "mesh": {"nx": 40, "ny": 40, "bounds": [-10, 10, -10, 10]},
        "geometry": {"kind": "circle", "center": [0, 0]},
        "sweep": {"start": 3.0, "stop": 7.0, "step": step},
        "material": {"k1": 2.0, "k2": 2.0e3},
        "bcs": {"dirichlet": [{"tag": "left", "value": 0.0},
                              {"tag": "right", "value": 100.0}]},
    })


@pytest.fixture(scope="module")
def spikes():
    cfg = _circle_cfg(0.02)  # full-resolution area scan
    found = scan_spike_radii(cfg, threshold=SPIKE_THRESHOLD)
    assert found, "area-ratio scan found no small intersections"
    return found


@pytest.fixture(scope="module")
def circle_study(spikes):
    """Shared sweep data for the conditioning/invariance/iteration criteria."""
    mesh = build_structured_mesh(40, 40, (-10, 10, -10, 10))
    radii = sorted(set(circle_radii(SWEEP_STEP)) | set(spikes))
    spike_set = set(spikes)
    rows = []
    t0 = time.time()
    for r in radii:
        field = build_levelset(mesh, Circle((0, 0), r))
        parts = partition_all(mesh, field.phi)
        table = build_enrichment(mesh, parts)
        tb = build_tb(mesh, parts, table)
        entry = {"r": r, "is_spike": r in spike_set,
                 "a_min": min_area_ratio(parts, symmetrized=True)}
        for label, method in (("sl", StabilizedLagrange(GAMMA_S)),
                              ("nit", Nitsche(GAMMA_N))):
            sys_ = assemble(mesh, field, parts, table, CIRCLE_MATERIAL,
                            CIRCLE_BCS, method)
            pipe = _Pipe(mesh, field, parts, table, sys_)
            P_id = make_point_preconditioner(pipe, "identity", math.inf)
            P_tb8 = make_preconditioner(tb, "TB", t_tol=1e8)
            ts_id = transformed_from_zero(pipe, P_id)
            ts_tb8 = transformed_from_zero(pipe, P_tb8)
            entry[f"cond_i_{label}"] = condition_number(ts_id.j)
            entry[f"cond_tb8_{label}"] = condition_number(ts_tb8.j)
            if label == "nit":
                try:
                    tj = build_tjac(jacobian(sys_))
                    ts_tj = transformed_from_zero(
                        pipe, make_preconditioner(tj, "Tjac"))
                    entry["cond_tjac_nit"] = condition_number(ts_tj.j)
                except ValueError:
                    entry["cond_tjac_nit"] = None
            if label == "sl":
                entry["pivot_i"] = identity_pivot_ratio(pipe)
                try:
                    entry["u_i"] = newton_solve(LinearProblem(sys_), P_id).u_hat
                except SingularMatrixError:
                    entry["u_i"] = None
                P_tbinf = make_preconditioner(tb, "TB", t_tol=math.inf)
                entry["u_tbinf"] = newton_solve(LinearProblem(sys_),
                                                P_tbinf).u_hat
                M = make_solver_preconditioner(ts_tb8.j, "ilu0", 1e-2)
                gm = gmres_solve(ts_tb8.j, -ts_tb8.r, GMRES_CFG, M)
                entry["gm_tb_ilu"] = gm
                if r in spike_set:
                    entry["gm_i_none"] = gmres_solve(ts_id.j, -ts_id.r,
                                                     GMRES_CFG)
        rows.append(entry)
        print(f"[circle_study] r={r:.2f} done ({time.time()-t0:.0f}s)",
              file=sys.stderr)
    return rows


class _Pipe:
    def __init__(self, mesh, field, parts, table, sys_):
        self.mesh, self.field, self.parts = mesh, field, parts
        self.table, self.sys = table, sys_


@pytest.fixture(scope="module")
def tradeoff_study(spikes):
    """Per-tolerance max condition number and integrated probe error."""
    mesh = build_structured_mesh(40, 40, (-10, 10, -10, 10))
    fine = build_structured_mesh(160, 160, (-10, 10, -10, 10))
    probes = probe_grid((-10, 10, -10, 10), 101)
    radii = sorted(set(circle_radii(TRADEOFF_STEP)) | set(spikes))
    method = StabilizedLagrange(GAMMA_S)

    variants = [("identity", t) for t in IDENT_T_TOLS] + \
               [("TB", t) for t in TB_T_TOLS]
    errs = {v: [] for v in variants}
    conds = {v: [] for v in variants}
    t0 = time.time()
    for r in radii:
        fine_pipe = build_pipeline(fine, Circle((0, 0), r), CIRCLE_MATERIAL,
                                   CIRCLE_BCS, method)
        fine_tb = build_tb(fine, fine_pipe.parts, fine_pipe.table)
        fine_res = newton_solve(LinearProblem(fine_pipe.sys),
                                make_preconditioner(fine_tb, "TB", t_tol=1e8))
        u_ref = evaluate_solution(fine, fine_pipe.field.phi, fine_pipe.parts,
                                  fine_pipe.table, fine_res.u_hat, probes)

        pipe = build_pipeline(mesh, Circle((0, 0), r), CIRCLE_MATERIAL,
                              CIRCLE_BCS, method)
        tb = build_tb(mesh, pipe.parts, pipe.table)
        cond_cache = {}
        for kind, t_tol in variants:
            P = make_preconditioner(tb if kind == "TB" else
                                    np.ones(pipe.table.total_dofs),
                                    kind, t_tol=t_tol, constrain_diag=tb)
            key = (kind, frozenset(P.constrained.tolist()))
            if key not in cond_cache:
                ts = transformed_from_zero(pipe, P)
                res = newton_solve(LinearProblem(pipe.sys), P)
                u = evaluate_solution(mesh, pipe.field.phi, pipe.parts,
                                      pipe.table, res.u_hat, probes)
                cond_cache[key] = (condition_number(ts.j),
                                   l2_relative_error(u, u_ref))
            c, e = cond_cache[key]
            conds[(kind, t_tol)].append(c)
            errs[(kind, t_tol)].append((r, e))
        print(f"[tradeoff] r={r:.2f} done ({time.time()-t0:.0f}s)",
              file=sys.stderr)
    e_total = {v: integrate_over_sweep(errs[v]) for v in variants}
    c_max = {v: max(conds[v]) for v in variants}
    return {"e_total": e_total, "c_max": c_max}


def test_bar_exactness_and_runtime():
    mesh = build_structured_mesh(5, 1, (0, 5, 0, 1))
    material = MaterialSpec(1.0, 2.0)
    method = StabilizedLagrange(3.0)
    worst = 0.0
    n_checked = n_skipped = 0
    t0 = time.perf_counter()
    for k in range(201):
        r_over_l = 0.3 + 0.002 * k
        r = 5.0 * r_over_l
        field = build_levelset(mesh, VerticalPlane(r))
        parts = partition_all(mesh, field.phi)
        table = build_enrichment(mesh, parts)
        sys_ = assemble(mesh, field, parts, table, material, BAR_BCS, method)
        tb = build_tb(mesh, parts, table)
        P = make_preconditioner(tb, "TB", t_tol=1e4)
        res = newton_solve(LinearProblem(sys_), P)
        if field.n_snapped > 0:
            n_skipped += 1  # interface degenerated onto a node
            continue
        n_checked += 1
        for i, p in enumerate(mesh.node_coords):
            phase = 1 if field.phi[i] < 0 else 2
            d = table.dofs_at(i, phase)[0]
            worst = max(worst, abs(res.u_hat[d] - bar_exact(p[0], r)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 5.0 and n_checked >= 199
    report("bar exactness", ok,
           f"max nodal error {worst:.2e} over {n_checked} positions "
           f"({n_skipped} snapped-degenerate skipped), {elapsed:.2f}s")


def test_ill_conditioning_onset_without_scaling():
    mesh = build_structured_mesh(5, 1, (0, 5, 0, 1))
    r = 2.0 + 1e-13  # nodal values stay below any snapping concern
    phi = np.asarray(sample_signed_distance(VerticalPlane(r),
                                            mesh.node_coords))
    parts = partition_all(mesh, phi)
    ratios = [phase_area(p, 1) / phase_area(p, 2)
              for p in parts if p.is_cut]
    table = build_enrichment(mesh, parts)
    sys_ = assemble(mesh, phi, parts, table, MaterialSpec(1.0, 2.0), BAR_BCS,
                    StabilizedLagrange(3.0))
    jac = jacobian(sys_)
    free = sys_.free_dofs
    cond = condition_number(jac[free][:, free].toarray())
    ok = min(ratios) < 1e-13 and cond > 1e13
    report("ill-conditioning onset", ok,
           f"area ratio {min(ratios):.2e} gives cond {cond:.2e} (> 1e13)")


def test_preconditioning_flattens_conditioning(circle_study):
    details = []
    ok = True
    for label in ("sl", "nit"):
        max_i = max(row[f"cond_i_{label}"] for row in circle_study)
        max_tb = max(row[f"cond_tb8_{label}"] for row in circle_study)
        gain = max_i / max_tb
        # the scaled system is also never worse point by point
        dominated = all(row[f"cond_tb8_{label}"]
                        <= row[f"cond_i_{label}"] * (1 + 1e-9)
                        for row in circle_study)
        ok = ok and gain >= 1e8 and dominated
        details.append(f"{label}: max cond {max_i:.2e} -> {max_tb:.2e} "
                       f"({gain:.1e}x, pointwise: {dominated})")
    report("preconditioning flattens conditioning", ok, "; ".join(details))


def test_jacobi_scaling_insufficient_for_nitsche(circle_study):
    tjac = [(row["r"], row["cond_tjac_nit"]) for row in circle_study
            if row["cond_tjac_nit"] is not None]
    assert tjac, "Jacobi scaling unavailable at every radius"
    r_worst, max_tjac = max(tjac, key=lambda t: t[1])
    max_tb = max(row["cond_tb8_nit"] for row in circle_study)
    spike_rs = {row["r"] for row in circle_study if row["is_spike"]}
    near_spike = any(abs(r_worst - s) <= SWEEP_STEP for s in spike_rs)
    ok = max_tjac >= 1e3 * max_tb and near_spike
    report("Jacobi vs gradient scaling gap", ok,
           f"max cond {max_tjac:.2e} at r={r_worst} (spike-adjacent: "
           f"{near_spike}) vs {max_tb:.2e} with gradient scaling")


def test_solution_invariance(circle_study):
    worst = 0.0
    n = 0
    for row in circle_study:
        if row["pivot_i"] > TRUST_PIVOT_RATIO or row["u_i"] is None:
            continue
        n += 1
        diff = (np.linalg.norm(row["u_i"] - row["u_tbinf"])
                / np.linalg.norm(row["u_tbinf"]))
        worst = max(worst, diff)
    ok = n > 10 and worst < 1e-8
    report("solution invariance", ok,
           f"worst relative difference {worst:.2e} over {n} trusted solves")


def test_constraining_tradeoff(tradeoff_study):
    e = tradeoff_study["e_total"]
    c = tradeoff_study["c_max"]
    e_ident = [e[("identity", t)] for t in IDENT_T_TOLS]
    c_ident = [c[("identity", t)] for t in IDENT_T_TOLS]
    # nearly identical constrained sets give ties that wiggle in the fifth
    # digit; 0.1% is far below the orders-of-magnitude shape being asserted
    mono_err = all(b >= a * (1 - 1e-3)
                   for a, b in zip(e_ident, e_ident[1:]))
    mono_cond = all(b <= a * (1 + 1e-3)
                    for a, b in zip(c_ident, c_ident[1:]))
    e_tb = [e[("TB", t)] for t in TB_T_TOLS]
    flat = max(e_tb) <= 2.0 * min(e_tb)
    ok = mono_err and mono_cond and flat
    report("constraining trade-off", ok,
           f"error {['%.3e' % v for v in e_ident]} non-decreasing: {mono_err}; "
           f"cond {['%.2e' % v for v in c_ident]} non-increasing: {mono_cond}; "
           f"gradient-scaled errors {['%.3e' % v for v in e_tb]} flat: {flat}")


def test_iteration_robustness(circle_study):
    iters = []
    all_converged = True
    for row in circle_study:
        gm = row["gm_tb_ilu"]
        all_converged = all_converged and gm.converged
        iters.append(gm.n_itr)
    iters = np.asarray(iters, dtype=float)
    cov = iters.std() / iters.mean()
    median_tb = float(np.median(iters))
    spike_ok = True
    spike_info = []
    for row in circle_study:
        if "gm_i_none" not in row:
            continue
        gm = row["gm_i_none"]
        good = (not gm.converged) or gm.n_itr > 2 * median_tb
        spike_ok = spike_ok and good
        spike_info.append(f"r={row['r']:g}:{gm.n_itr}"
                          f"{'' if gm.converged else 'F'}")
    ok = all_converged and cov < 0.5 and spike_ok
    report("iteration robustness", ok,
           f"scaled+ILU0 converged everywhere: {all_converged}, CoV "
           f"{cov:.2f}; unscaled at spikes [{', '.join(spike_info)}] vs "
           f"median {median_tb:.0f}")


def test_enrichment_multiplicity_and_oracle():
    # three-pocket configuration: four DOFs at the patch's center node
    mesh = build_structured_mesh(2, 2, (0, 2, 0, 2))
    phi = np.full(mesh.n_nodes, -0.7)
    for corner in [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]:
        i = np.flatnonzero((mesh.node_coords == np.asarray(corner))
                           .all(axis=1))[0]
        phi[i] = 0.8
    parts = partition_all(mesh, phi)
    table = build_enrichment(mesh, parts)
    center_ok = (len(table.dofs_at(4, 1)) == 1
                 and len(table.dofs_at(4, 2)) == 3)

    mesh6 = build_structured_mesh(6, 6, (0, 6, 0, 6))
    rng = np.random.default_rng(11)
    mismatches = 0
    for _ in range(50):
        phi6 = rng.uniform(-1, 1, mesh6.n_nodes)
        phi6[np.abs(phi6) < 1e-3] = 0.5
        parts6 = partition_all(mesh6, phi6)
        table6 = build_enrichment(mesh6, parts6)
        oracle = brute_force_level_counts(mesh6, parts6)
        for i in range(mesh6.n_nodes):
            for phase in (1, 2):
                if len(table6.dofs_at(i, phase)) != oracle[(i, phase)]:
                    mismatches += 1
    ok = center_ok and mismatches == 0
    report("enrichment correctness", ok,
           f"center node carries 1+3 DOFs: {center_ok}; oracle mismatches "
           f"over 50 random fields: {mismatches}")


def test_property_suites():
    rng = np.random.default_rng(0)
    # partition of unity
    pou = max(abs(shape_values(x, e).sum() - 1.0)
              for x, e in rng.uniform(-1, 1, (100, 2)))

    # area conservation on random sign patterns
    unit = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    area_err = 0.0
    for _ in range(200):
        phi = rng.uniform(-1, 1, 4)
        phi[phi == 0] = 0.5
        part = partition_element(unit, phi)
        area_err = max(area_err,
                       abs(phase_area(part, 1) + phase_area(part, 2) - 1.0))

    # patch test, both coupling methods
    exact = lambda x, y: 0.3 - 1.2 * x + 0.8 * y
    mesh = build_structured_mesh(5, 5, (0, 2.5, 0, 2.5))
    bcs = BoundaryConditions(dirichlet=tuple(
        (tag, exact) for tag in ("left", "right", "top", "bottom")))
    patch_err = 0.0
    for method in (StabilizedLagrange(2.6), Nitsche(0.0013)):
        pipe = build_pipeline(mesh, Circle((1.2, 1.3), 0.7),
                              MaterialSpec(1.3, 1.3), bcs, method)
        res = newton_solve(LinearProblem(pipe.sys))
        for d in range(pipe.table.total_dofs):
            p = mesh.node_coords[pipe.table.dof_node[d]]
            patch_err = max(patch_err, abs(res.u_hat[d] - exact(*p)))

    # Jacobian against central finite differences
    bar = build_pipeline(build_structured_mesh(5, 1, (0, 5, 0, 1)),
                         VerticalPlane(2.45), MaterialSpec(1.0, 2.0), BAR_BCS,
                         StabilizedLagrange(3.0))
    jac = jacobian(bar.sys).toarray()
    u = rng.normal(size=bar.sys.ndof)
    fd_err = 0.0
    h = 1e-6
    for j in range(bar.sys.ndof):
        e = np.zeros(bar.sys.ndof)
        e[j] = h
        col = (residual(bar.sys, u + e) - residual(bar.sys, u - e)) / (2 * h)
        fd_err = max(fd_err, np.abs(col - jac[:, j]).max())
    fd_rel = fd_err / np.abs(jac).max()

    # congruence eigenvalue oracle
    a = rng.normal(size=(40, 40))
    spd = a @ a.T + 40 * np.eye(40)
    t = rng.uniform(0.5, 4.0, size=40)
    import scipy.sparse as sp
    ts = transform_system(np.zeros(40), sp.csr_matrix(spd),
                          make_preconditioner(t, "TB"))
    eig_err = np.abs(np.linalg.eigvalsh(ts.j.toarray())
                     - np.linalg.eigvalsh(np.diag(t) @ spd @ np.diag(t))).max()
    eig_rel = eig_err / np.abs(np.linalg.eigvalsh(ts.j.toarray())).max()

    ok = (pou < 1e-14 and area_err < 1e-12 and patch_err < 1e-10
          and fd_rel < 1e-6 and eig_rel < 1e-10)
    report("property suites", ok,
           f"unity {pou:.1e}, area {area_err:.1e}, patch {patch_err:.1e}, "
           f"Jacobian-FD {fd_rel:.1e}, congruence {eig_rel:.1e}")

"""Command-line harness.

Subcommands: mesh (build + validate + write), solve (one coupled solve with
CSV/SVG/JSON-lines outputs), convergence (refinement study against the
exact pair or a fine reference solution), selftest (internal invariant
battery).  Exit codes: 0 ok, 1 usage/config, 2 geometry or meshing,
3 solver, 4 I/O.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import tempfile

import numpy as np

from . import config as cfgmod
from . import fem, metrics, solver, svg
from . import mesh as meshmod
from . import problem as probmod
from .errors import (
    ConfigError,
    GeometryError,
    MeshFormatError,
    MeshingError,
    PointLocationError,
    SingularMatrixError,
    SolverError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_problem_flags(p):
    p.add_argument("--preset", choices=sorted(cfgmod.PRESETS),
                   help="bundled problem instance")
    p.add_argument("--config", help="config file (key = value with [section]s)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="stcontrol",
                     description="space-time interface-fitted optimal control solver")
    sub = parser.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="build, validate and write a mesh")
    _add_problem_flags(pm)
    pm.add_argument("--layers", type=int, help="number of time strips")
    pm.add_argument("--out", help="output mesh file (default mesh.stmesh)")
    pm.set_defaults(func=cmd_mesh)

    ps = sub.add_parser("solve", help="solve the coupled optimality system")
    _add_problem_flags(ps)
    ps.add_argument("--layers", type=int)
    ps.add_argument("--adjoint-space", choices=["U", "W"], dest="adjoint_space")
    ps.add_argument("--quad-subdiv", type=int, dest="quad_subdiv")
    ps.add_argument("--out", help="output directory (default out)")
    ps.add_argument("--serial", action="store_true")
    ps.set_defaults(func=cmd_solve)

    pc = sub.add_parser("convergence", help="run a refinement study")
    _add_problem_flags(pc)
    pc.add_argument("--layers", help="comma-separated layer counts, e.g. 15,30,60")
    pc.add_argument("--adjoint-space", choices=["U", "W"], dest="adjoint_space")
    pc.add_argument("--quad-subdiv", type=int, dest="quad_subdiv")
    pc.add_argument("--reference-layers", type=int, dest="reference_layers",
                    help="measure against a reference solve at this resolution")
    pc.add_argument("--plot", action="store_true", help="also write a log-log SVG")
    pc.add_argument("--out", help="output directory (default out)")
    pc.add_argument("--serial", action="store_true",
                    help="run levels sequentially in-process")
    pc.set_defaults(func=cmd_convergence)

    pt = sub.add_parser("selftest", help="run the invariant battery")
    pt.add_argument("--seed", type=int, default=20260814)
    pt.set_defaults(func=cmd_selftest)
    return parser


def _parse_layer_list(text):
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --layers list {text!r}") from None
    if not values or any(v < 2 for v in values):
        raise UsageError("every layer count must be an integer >= 2")
    return values


def _resolve(args) -> cfgmod.RunConfig:
    parsed = cfgmod.load_config(args.config) if getattr(args, "config", None) else None

    if getattr(args, "preset", None):
        if parsed is not None and parsed.has_section("problem"):
            raise UsageError("--preset conflicts with a [problem] section in --config")
        source = ("preset", args.preset)
    elif parsed is not None and parsed.has_section("problem"):
        source = ("config", os.path.abspath(args.config))
    else:
        source = ("preset", "example1-static")
    rc = cfgmod.RunConfig(spec=cfgmod.problem_from_source(source), source=source)

    if parsed is not None and parsed.has_section("discretization"):
        sec = parsed["discretization"]
        try:
            if "layers" in sec:
                values = _parse_layer_list(sec["layers"])
                rc.layers = values[0]
                rc.layer_list = values
            if "adjoint_space" in sec:
                rc.adjoint_space = sec["adjoint_space"]
            if "quad_subdiv" in sec:
                rc.quad_subdiv = sec.getint("quad_subdiv")
            if "rho_max" in sec:
                rc.rho_max = sec.getfloat("rho_max")
        except ValueError as exc:
            raise ConfigError(f"bad [discretization] value: {exc}") from exc
    if parsed is not None and parsed.has_section("metrics"):
        sec = parsed["metrics"]
        try:
            if "spacetime_gradient" in sec:
                rc.spacetime_gradient = sec.getboolean("spacetime_gradient")
            if "reference_layers" in sec:
                rc.reference_layers = sec.getint("reference_layers")
        except ValueError as exc:
            raise ConfigError(f"bad [metrics] value: {exc}") from exc

    if getattr(args, "layers", None) is not None:
        if isinstance(args.layers, str):
            rc.layer_list = _parse_layer_list(args.layers)
            rc.layers = rc.layer_list[0]
        else:
            if args.layers < 2:
                raise UsageError("--layers must be >= 2")
            rc.layers = args.layers
    if getattr(args, "adjoint_space", None):
        rc.adjoint_space = args.adjoint_space
    if getattr(args, "quad_subdiv", None) is not None:
        if args.quad_subdiv < 0:
            raise UsageError("--quad-subdiv must be >= 0")
        rc.quad_subdiv = args.quad_subdiv
    if getattr(args, "reference_layers", None) is not None:
        rc.reference_layers = args.reference_layers
    if rc.adjoint_space not in ("U", "W"):
        raise ConfigError(f"adjoint_space must be U or W, got {rc.adjoint_space!r}")
    return rc


def _checked_mesh(rc: cfgmod.RunConfig, layers: int):
    m = meshmod.build_mesh(rc.spec, layers)
    report = meshmod.validate_mesh(m, rc.spec, rc.rho_max)
    if not report.ok:
        raise MeshingError(f"mesh failed validation: {report.as_dict()}")
    return m, report


def cmd_mesh(args) -> int:
    rc = _resolve(args)
    m = meshmod.build_mesh(rc.spec, rc.layers)
    report = meshmod.validate_mesh(m, rc.spec, rc.rho_max)
    out = args.out or "mesh.stmesh"
    meshmod.write_mesh(m, out)
    print(json.dumps(report.as_dict(), sort_keys=True))
    if not report.ok:
        raise MeshingError("mesh failed validation")
    print(f"wrote {out}")
    return 0


def _write_solution_csv(path, m, sol, z_f):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["vertex_id", "x", "t", "u", "p", "z_f"])
        for i in range(m.num_vertices):
            writer.writerow([
                i,
                f"{m.vertices[i, 0]:.17g}",
                f"{m.vertices[i, 1]:.17g}",
                f"{sol.u[i]:.17g}",
                f"{sol.p[i]:.17g}",
                f"{z_f[i]:.17g}",
            ])


def _write_jsonl(path, records):
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_solve(args) -> int:
    rc = _resolve(args)
    outdir = args.out or "out"
    os.makedirs(outdir, exist_ok=True)
    m, report = _checked_mesh(rc, rc.layers)
    sol = solver.solve_optimality(m, rc.spec, rc.adjoint_space, rc.quad_subdiv)
    z_f = solver.recover_control_riesz(sol, rc.spec)

    _write_solution_csv(os.path.join(outdir, "solution.csv"), m, sol, z_f)
    svg.render_field(m, sol.u, os.path.join(outdir, "state.svg"), "state u_h")
    svg.render_field(m, sol.p, os.path.join(outdir, "adjoint.svg"), "adjoint p_h")
    svg.render_field(m, z_f, os.path.join(outdir, "control.svg"), "control riesz z_f")

    records = [
        {"record": "mesh", **report.as_dict()},
        {"record": "solve", "dofs": 2 * m.num_vertices, "layers": rc.layers,
         "adjoint_space": rc.adjoint_space, "residual": sol.residual},
        {"record": "norms",
         "triple_u": metrics.triple_norm(m, rc.spec, sol.u),
         "star_u": metrics.star_norm(m, rc.spec, sol.u),
         "triple_p": metrics.triple_norm(m, rc.spec, sol.p)},
    ]
    if rc.spec.exact_state is not None and rc.spec.exact_adjoint is not None:
        err = metrics.energy_error(m, rc.spec, sol.u, sol.p, rc.quad_subdiv,
                                   rc.spacetime_gradient)
        records.append({"record": "energy_error", "value": err})
        print(f"energy_error = {err:.6g}")
    _write_jsonl(os.path.join(outdir, "metrics.jsonl"), records)
    print(f"residual = {sol.residual:.3e}")
    print(f"wrote {outdir}/solution.csv")
    return 0


def _run_level(payload) -> tuple:
    """One convergence level; module-level so executors can pickle it."""
    spec = cfgmod.problem_from_source(payload["source"])
    m = meshmod.build_mesh(spec, payload["layers"])
    report = meshmod.validate_mesh(m, spec, payload["rho_max"])
    if not report.ok:
        raise MeshingError(
            f"mesh failed validation at layers={payload['layers']}"
        )
    sol = solver.solve_optimality(m, spec, payload["adjoint_space"],
                                  payload["quad_subdiv"])
    if payload.get("ref_mesh") is None:
        err = metrics.energy_error(m, spec, sol.u, sol.p,
                                   payload["quad_subdiv"],
                                   payload["spacetime_gradient"])
    else:
        err = metrics.reference_error(m, sol.u, sol.p, payload["ref_mesh"],
                                      payload["ref_u"], payload["ref_p"],
                                      payload["quad_subdiv"])
    return 2 * m.num_vertices, m.h, err


def cmd_convergence(args) -> int:
    rc = _resolve(args)
    outdir = args.out or "out"
    os.makedirs(outdir, exist_ok=True)
    levels = rc.layer_list or [15, 30, 60]

    has_exact = rc.spec.exact_state is not None and rc.spec.exact_adjoint is not None
    reference_layers = rc.reference_layers
    if reference_layers is None and not has_exact:
        reference_layers = 240
    ref_payload = {}
    if reference_layers is not None:
        if reference_layers <= max(levels):
            raise UsageError("--reference-layers must exceed every study level")
        ref_mesh, _ = _checked_mesh(rc, reference_layers)
        ref_sol = solver.solve_optimality(ref_mesh, rc.spec, rc.adjoint_space,
                                          rc.quad_subdiv)
        ref_payload = {"ref_mesh": ref_mesh, "ref_u": ref_sol.u, "ref_p": ref_sol.p}

    payloads = [
        {
            "source": rc.source,
            "layers": layers,
            "rho_max": rc.rho_max,
            "adjoint_space": rc.adjoint_space,
            "quad_subdiv": rc.quad_subdiv,
            "spacetime_gradient": rc.spacetime_gradient,
            **ref_payload,
        }
        for layers in levels
    ]
    if args.serial or len(levels) == 1:
        results = [_run_level(p) for p in payloads]
    else:
        workers = min(len(levels), os.cpu_count() or 1)
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_level, payloads))

    dofs = [r[0] for r in results]
    hs = [r[1] for r in results]
    errors = [r[2] for r in results]
    report = metrics.ConvergenceReport.from_results(dofs, hs, errors)
    report.write_csv(os.path.join(outdir, "report.csv"))
    metric_name = "reference_error" if reference_layers is not None else "energy_error"
    records = [
        {"record": "level", "layers": lv, "dofs": d, "h": h,
         "metric": metric_name, "error": e, "order": o}
        for lv, d, h, e, o in zip(levels, dofs, hs, errors, report.order)
    ]
    _write_jsonl(os.path.join(outdir, "metrics.jsonl"), records)
    if args.plot:
        svg.render_loglog(hs, errors, os.path.join(outdir, "convergence.svg"),
                          f"{rc.spec.name}: {metric_name} vs h")

    print(f"{'dofs':>8} {'h':>12} {'error':>12} {'order':>8}")
    for d, h, e, o in zip(dofs, hs, errors, report.order):
        order = "  --" if o is None else f"{o:8.3f}"
        print(f"{d:8d} {h:12.5e} {e:12.5e} {order}")
    if report.order[-1] is not None:
        print(f"final EOC = {report.order[-1]:.3f}")
    print(f"wrote {outdir}/report.csv")
    return 0


def _zero_desired_spec() -> probmod.ProblemSpec:
    def zeros(x, t):
        return np.zeros_like(np.asarray(x, dtype=float))

    return probmod.ProblemSpec(
        x_min=0.0, x_max=1.0, t_final=1.0, kappa1=1.5, kappa2=1.0, eta=1e-3,
        velocity=probmod.velocity_zero(), offset_a=0.3, offset_b=0.7,
        desired_state=zeros, name="zero-desired",
    )


def _selftest_checks(seed):
    rng = np.random.default_rng(seed)

    def quadrature(rule, limit=1e-14):
        ref = meshmod.SpaceTimeMesh(
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            triangles=np.array([[0, 1, 2]]),
            regions=np.array([2]),
            interface_edges=np.zeros((0, 2), dtype=np.int64),
            boundary_tags=np.zeros(3, dtype=np.int64),
            h=np.sqrt(2.0),
        )
        import math as _math
        for p in range(rule.degree + 1):
            for q in range(rule.degree + 1 - p):
                exact = _math.factorial(p) * _math.factorial(q) / _math.factorial(p + q + 2)
                x = ref.vertices[ref.triangles[0], 0] @ rule.points.T
                t = ref.vertices[ref.triangles[0], 1] @ rule.points.T
                approx = 0.5 * float(np.sum(rule.weights * x**p * t**q))
                if abs(approx - exact) > limit:
                    raise AssertionError(
                        f"monomial x^{p} t^{q}: {approx!r} vs {exact!r}"
                    )

    def check_quadrature():
        quadrature(fem.rule_degree2())
        quadrature(fem.rule_degree5())
        quadrature(fem.subdivided_rule(fem.rule_degree5(), 1))

    def check_meshes():
        for build in (probmod.example1_static, probmod.example1_moving):
            spec = build()
            for layers in (2, 8, 17):
                report = meshmod.validate_mesh(meshmod.build_mesh(spec, layers), spec)
                if not report.ok:
                    raise AssertionError(f"{spec.name} layers={layers}: {report.as_dict()}")

    def check_roundtrip():
        spec = probmod.example1_moving()
        m = meshmod.build_mesh(spec, 6)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "m.stmesh")
            meshmod.write_mesh(m, path)
            back = meshmod.read_mesh(path)
        if not (
            np.array_equal(m.vertices, back.vertices)
            and np.array_equal(m.triangles, back.triangles)
            and np.array_equal(m.regions, back.regions)
            and np.array_equal(m.interface_edges, back.interface_edges)
            and np.array_equal(m.boundary_tags, back.boundary_tags)
        ):
            raise AssertionError("mesh file round trip changed data")

    def check_coercivity():
        for build in (probmod.example1_static, probmod.example1_moving):
            spec = build()
            m = meshmod.build_mesh(spec, 8)
            dofs = fem.state_dofmap(m)
            A = fem.assemble_state_matrix(m, spec, dofs)
            for _ in range(10):
                u = np.zeros(m.num_vertices)
                u[dofs.free] = rng.uniform(-1.0, 1.0, dofs.free.size)
                quad = float(u @ (A @ u))
                tri2 = metrics.triple_norm(m, spec, u) ** 2
                if quad < tri2 * (1.0 - 1e-10):
                    raise AssertionError(f"{spec.name}: u^T A u = {quad} < {tri2}")

    def check_riesz_identity():
        spec = probmod.example1_static()
        m = meshmod.build_mesh(spec, 8)
        dofs = fem.state_dofmap(m)
        w = np.zeros(m.num_vertices)
        w[dofs.free] = rng.uniform(-1.0, 1.0, dofs.free.size)
        star = metrics.star_norm(m, spec, w)
        if not (star >= metrics.triple_norm(m, spec, w)):
            raise AssertionError("star norm smaller than triple norm")

    def check_zero_desired():
        spec = _zero_desired_spec()
        m = meshmod.build_mesh(spec, 8)
        sol = solver.solve_optimality(m, spec)
        if not (np.all(sol.u == 0.0) and np.all(sol.p == 0.0)):
            raise AssertionError("zero desired state must give the zero solution")

    def check_linear_interpolant():
        spec = probmod.example1_static()
        m = meshmod.build_mesh(spec, 10)
        w = m.vertices[:, 0].copy()
        got = metrics.triple_norm(m, spec, w) ** 2
        want = spec.kappa1 * 0.2 + spec.kappa2 * 0.8
        if abs(got - want) > 1e-12:
            raise AssertionError(f"|||x|||^2 = {got!r}, expected {want!r}")

    def check_control_recovery():
        spec = probmod.example1_static()
        m = meshmod.build_mesh(spec, 10)
        sol = solver.solve_optimality(m, spec)
        z_f = solver.recover_control_riesz(sol, spec)
        dofs = fem.state_dofmap(m)
        A = fem.assemble_state_matrix(m, spec, dofs)
        K = fem.assemble_spatial_stiffness(m, spec, dofs)
        free = dofs.free
        lhs = (A @ sol.u)[free]
        rhs = (K @ z_f)[free]
        if np.linalg.norm(lhs - rhs) > 1e-8 * np.linalg.norm(rhs):
            raise AssertionError("state equation inconsistent with recovered control")

    return [
        ("quadrature-exactness", check_quadrature),
        ("mesh-presets-valid", check_meshes),
        ("mesh-file-roundtrip", check_roundtrip),
        ("state-form-coercivity", check_coercivity),
        ("riesz-identity", check_riesz_identity),
        ("zero-desired-state", check_zero_desired),
        ("linear-interpolant-norm", check_linear_interpolant),
        ("control-recovery", check_control_recovery),
    ]


def cmd_selftest(args) -> int:
    failures = 0
    for name, check in _selftest_checks(args.seed):
        try:
            check()
        except Exception as exc:  # report every failure, keep going
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")
    if failures:
        print(f"{failures} selftest check(s) failed")
        return 3
    print("all selftest checks passed")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"stcontrol: usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"stcontrol: config error: {exc}", file=sys.stderr)
        return 1
    except (GeometryError, MeshingError, PointLocationError) as exc:
        print(f"stcontrol: geometry error: {exc}", file=sys.stderr)
        return 2
    except MeshFormatError as exc:
        print(f"stcontrol: mesh format error: {exc}", file=sys.stderr)
        return 4
    except (SolverError, SingularMatrixError) as exc:
        print(f"stcontrol: solver error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"stcontrol: usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"stcontrol: i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

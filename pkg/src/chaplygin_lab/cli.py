"""Command-line front end.

Subcommands: analyze, simulate, verify, reconstruct, holonomy,
list-systems.  Systems come from the builtin catalog or from config files
(TOML primary, JSON accepted) whose metric blocks and connection
coefficients are arithmetic expression strings over the declared base
coordinates.  Exit codes: 0 success, 1 verification failure, 2 config
error, 3 runtime/pipeline error.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:       # Python 3.10
    import tomli as tomllib

from . import catalog, measure, reconstruction
from .autodiff import SmoothMap
from .dynamics import (FullField, FullSystem, IntegratorConfig, ReducedField,
                       State, compare_full_reduced, geodesic_coincidence,
                       integrate, integrate_with_jacobian)
from .errors import ChaplyginError, ConfigError, ParameterOutOfRange
from .expressions import parse_field
from .measure import Region, measure_verdict
from .reconstruction import (abelian_holonomy_by_curvature,
                             abelian_translations, horizontal_lift, holonomy,
                             polyline_loop, verify_lift)
from .reduction import ChaplyginSystem, classify, reduced_jet

SCHEMA_VERSION = 1


# configuration ----------------------------------------------------------------

def _check_keys(table, allowed, where):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path):
    if path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
    else:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    _check_keys(doc, {"schema_version", "system", "region", "integrator",
                      "initial", "run"}, "config")
    return doc


def custom_system_from_config(spec):
    _check_keys(spec, {"name", "coordinates", "group_dim", "structure_constants",
                       "gamma", "g_bb", "g_bg", "g_gg", "potential",
                       "sample_points"}, "system.custom")
    try:
        coords = [str(c) for c in spec["coordinates"]]
        k = int(spec["group_dim"])
    except KeyError as exc:
        raise ConfigError(f"system.custom missing key {exc}") from None
    n = len(coords)
    cc = np.asarray(spec.get("structure_constants",
                             np.zeros((k, k, k)).tolist()), dtype=float)

    def field_map(key, shape):
        try:
            texts = spec[key]
        except KeyError:
            raise ConfigError(f"system.custom missing block {key!r}") from None
        pf = parse_field(texts, coords)
        if pf.out_shape != shape:
            raise ConfigError(f"{key} must have shape {shape}, got {pf.out_shape}")
        return pf.to_smooth_map(name=key)

    potential = None
    if "potential" in spec:
        pf = parse_field(spec["potential"], coords)
        if pf.out_shape != ():
            raise ConfigError("potential must be a single expression")
        potential = pf.to_smooth_map(name="potential")

    samples = [np.asarray(p, dtype=float) for p in spec.get("sample_points", [])]
    try:
        sys_ = ChaplyginSystem(
            name=str(spec.get("name", "custom")),
            n_base=n, group_dim=k, structure_constants=cc,
            gamma=field_map("gamma", (k, n)),
            g_bb=field_map("g_bb", (n, n)),
            g_bg=field_map("g_bg", (n, k)),
            g_gg=field_map("g_gg", (k, k)),
            potential=potential, sample_points=samples)
    except (ValueError, ChaplyginError) as exc:
        raise ConfigError(f"invalid custom system: {exc}") from None
    return sys_


def abelian_full_system(sys_):
    """Generic full-space oracle for an abelian fiber group: trivialization
    coordinates (q, z) with constraints zdot^i + gamma^i_a qdot^a = 0."""
    if sys_.structure_constants.any():
        return None
    n, k = sys_.n_base, sys_.group_dim

    def metric_fn(qf):
        q = list(qf[:n])
        gbb = np.asarray(sys_.g_bb.fn(q), dtype=object)
        gbg = np.asarray(sys_.g_bg.fn(q), dtype=object)
        ggg = np.asarray(sys_.g_gg.fn(q), dtype=object)
        out = np.empty((n + k, n + k), dtype=object)
        out[:n, :n] = gbb
        out[:n, n:] = gbg
        out[n:, :n] = gbg.T
        out[n:, n:] = ggg
        return out

    def mu_fn(qf):
        q = list(qf[:n])
        gam = np.asarray(sys_.gamma.fn(q), dtype=object)
        out = np.empty((k, n + k), dtype=object)
        out[:, :n] = gam
        out[:, n:] = np.eye(k)
        return out

    pot = None
    if sys_.potential is not None:
        pot = SmoothMap(lambda qf: sys_.potential.fn(list(qf[:n])), n + k, (),
                        name="potential_full")
    return FullSystem(
        name=sys_.name, dim=n + k,
        metric=SmoothMap(metric_fn, n + k, (n + k, n + k), name="metric_full"),
        mu=SmoothMap(mu_fn, n + k, (k, n + k), name="mu_full"),
        n_constraints=k, base_indices=tuple(range(n)),
        fiber_indices=tuple(range(n, n + k)), potential=pot)


@dataclass
class RunSetup:
    name: str
    system: ChaplyginSystem
    full_system: object
    group_model: object
    region: Region
    integrator: IntegratorConfig
    q0: np.ndarray
    v0: np.ndarray
    seed: int
    out_dir: str
    threshold: float
    t_final: float
    literature: dict


def _parse_params(items):
    out = {}
    for item in items or []:
        for piece in item.split(","):
            if not piece:
                continue
            if "=" not in piece:
                raise ConfigError(f"--params expects key=value, got {piece!r}")
            key, val = piece.split("=", 1)
            try:
                out[key.strip()] = float(val)
            except ValueError:
                raise ConfigError(f"parameter {key!r} must be numeric") from None
    return out


def _parse_vector(text, what):
    try:
        return np.asarray([float(x) for x in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated number list") from None


def build_setup(args):
    doc = load_config(args.config) if getattr(args, "config", None) else {}
    sys_tab = doc.get("system", {})
    _check_keys(sys_tab, {"builtin", "params", "custom"}, "system")

    name = getattr(args, "system", None) or sys_tab.get("builtin")
    params = dict(sys_tab.get("params", {}))
    params.update(_parse_params(getattr(args, "params", None)))

    entry = None
    if "custom" in sys_tab and name is None:
        system = custom_system_from_config(sys_tab["custom"])
        full = abelian_full_system(system)
        gm = abelian_translations(system.group_dim)
        name = system.name
        lit = {}
        default_region = (np.zeros(system.n_base), np.ones(system.n_base))
        default_state = (np.zeros(system.n_base),
                         np.ones(system.n_base) / np.sqrt(system.n_base))
    else:
        if name is None:
            raise ConfigError("no system selected: pass --system or a config file")
        entry = catalog.build(name, params)
        system, full, gm = entry.system, entry.full_system, entry.group_model
        lit = entry.literature
        default_region = (np.asarray(entry.default_region[0], dtype=float),
                          np.asarray(entry.default_region[1], dtype=float))
        default_state = (np.asarray(entry.default_state[0], dtype=float),
                         np.asarray(entry.default_state[1], dtype=float))

    reg_tab = doc.get("region", {})
    _check_keys(reg_tab, {"lo", "hi", "samples", "simply_connected"}, "region")
    if getattr(args, "region", None):
        lo_txt, _, hi_txt = args.region.partition(":")
        lo, hi = _parse_vector(lo_txt, "--region lo"), _parse_vector(hi_txt, "--region hi")
    elif reg_tab:
        lo = np.asarray(reg_tab["lo"], dtype=float)
        hi = np.asarray(reg_tab["hi"], dtype=float)
    else:
        lo, hi = default_region
    try:
        region = Region(lo, hi, n_samples=int(reg_tab.get("samples", 64)),
                        simply_connected=bool(reg_tab.get("simply_connected", True)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    int_tab = doc.get("integrator", {})
    _check_keys(int_tab, {"method", "step", "rtol", "atol", "max_steps"},
                "integrator")
    try:
        integ = IntegratorConfig(
            method=getattr(args, "method", None) or int_tab.get("method", "rk4"),
            step=getattr(args, "step", None) or float(int_tab.get("step", 1e-3)),
            rtol=getattr(args, "rtol", None) or float(int_tab.get("rtol", 1e-10)),
            atol=getattr(args, "atol", None) or float(int_tab.get("atol", 1e-12)),
            max_steps=int(int_tab.get("max_steps", 2_000_000)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    init_tab = doc.get("initial", {})
    _check_keys(init_tab, {"q", "v"}, "initial")
    q0 = _parse_vector(args.q0, "--q0") if getattr(args, "q0", None) \
        else np.asarray(init_tab.get("q", default_state[0]), dtype=float)
    v0 = _parse_vector(args.v0, "--v0") if getattr(args, "v0", None) \
        else np.asarray(init_tab.get("v", default_state[1]), dtype=float)
    if q0.size != system.n_base or v0.size != system.n_base:
        raise ConfigError("initial state dimension does not match the system")

    run_tab = doc.get("run", {})
    _check_keys(run_tab, {"seed", "t_final", "out", "threshold"}, "run")
    seed = getattr(args, "seed", None)
    seed = int(run_tab.get("seed", 0)) if seed is None else int(seed)
    t_final = getattr(args, "t_final", None) or float(run_tab.get("t_final", 1.0))
    out_dir = getattr(args, "out", None) or run_tab.get("out", ".")
    threshold = getattr(args, "threshold", None) or float(run_tab.get("threshold", 1e-8))
    return RunSetup(name=name, system=system, full_system=full, group_model=gm,
                    region=region, integrator=integ, q0=q0, v0=v0, seed=seed,
                    out_dir=out_dir, threshold=threshold, t_final=t_final,
                    literature=lit)


def _dump_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _ensure_out(setup):
    os.makedirs(setup.out_dir, exist_ok=True)


# subcommands ------------------------------------------------------------------

def cmd_analyze(args):
    setup = build_setup(args)
    rng = np.random.default_rng(setup.seed)
    sys_ = setup.system
    pts = setup.region.grid(args.grid)
    grid = []
    for q in pts:
        jet = reduced_jet(sys_, q, order=1)
        grid.append({
            "q": [float(x) for x in q],
            "gt": jet.gt.tolist(),
            "Omega": jet.Omega.tolist(),
            "K": jet.K.tolist(),
            "B": jet.B.tolist(),
            "beta": jet.beta.tolist(),
        })
    cls = classify(sys_, pts)
    report = measure_verdict(sys_, setup.region, threshold=setup.threshold, rng=rng)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "system": setup.name,
        "seed": setup.seed,
        "region": {"lo": setup.region.lo.tolist(), "hi": setup.region.hi.tolist()},
        "classification": {
            "label": cls.label,
            "b_symmetric_part_max": cls.b_symmetric_part_max,
            "hhalf_vs_levi_civita_max": cls.hhalf_vs_levi_civita_max,
        },
        "measure": report.to_dict(),
        "grid": grid,
    }
    _ensure_out(setup)
    path = os.path.join(setup.out_dir, f"analyze_{setup.name}.json")
    _dump_json(doc, path)
    print(f"{setup.name}: classification={cls.label} verdict={report.verdict}")
    print(f"closedness residual: {report.closedness_residual:.6e}")
    print(f"report written to {path}")
    return 0


def cmd_simulate(args):
    setup = build_setup(args)
    field = ReducedField(setup.system)
    traj = integrate(field, State(setup.q0, setup.v0), (0.0, setup.t_final),
                     setup.integrator)
    traj.metadata.update({"system": setup.name, "seed": setup.seed,
                          "space": "reduced"})
    _ensure_out(setup)
    base = os.path.join(setup.out_dir, f"trajectory_{setup.name}")
    traj.to_csv(base + ".csv")
    traj.to_json(base + ".json")
    drift = float(np.max(np.abs(traj.energy - traj.energy[0])))
    print(f"{setup.name}: {len(traj.t)} samples, energy drift {drift:.3e}")
    print(f"trajectory written to {base}.csv (+ .json sidecar)")
    return 0


def cmd_reconstruct(args):
    setup = build_setup(args)
    field = ReducedField(setup.system)
    traj = integrate(field, State(setup.q0, setup.v0), (0.0, setup.t_final),
                     setup.integrator)
    lifted = horizontal_lift(setup.system, setup.group_model, traj, None)
    resid, mismatch = verify_lift(setup.system, setup.group_model, lifted)
    _ensure_out(setup)
    path = os.path.join(setup.out_dir, f"reconstruction_{setup.name}.json")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "system": setup.name,
        "seed": setup.seed,
        "connection_residual": resid,
        "projection_mismatch": mismatch,
        "t": traj.t.tolist(),
        "base_q": traj.q.tolist(),
        "fiber": lifted.fiber.tolist(),
    }
    _dump_json(doc, path)
    print(f"{setup.name}: lift residual {resid:.3e}; report written to {path}")
    return 0


def cmd_holonomy(args):
    setup = build_setup(args)
    kind, _, size_txt = (args.loop or "square:0.5").partition(":")
    if kind != "square":
        raise ConfigError(f"unknown loop kind {kind!r}; only square:SIDE is supported")
    try:
        side = float(size_txt)
    except ValueError:
        raise ConfigError("loop side must be numeric, e.g. square:0.5") from None
    corner = setup.q0
    pts = [corner,
           corner + np.array([side, 0.0]),
           corner + np.array([side, side]),
           corner + np.array([0.0, side])]
    loop = polyline_loop(pts, samples_per_edge=args.loop_samples)
    rep = holonomy(setup.system, setup.group_model, loop)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "system": setup.name,
        "seed": setup.seed,
        "loop": rep.loop,
        "displacement": rep.displacement.tolist(),
        "closure_residual": rep.closure_residual,
    }
    if not setup.system.structure_constants.any():
        box = ((corner[0], corner[0] + side), (corner[1], corner[1] + side))
        pred = abelian_holonomy_by_curvature(setup.system, box)
        doc["curvature_prediction"] = pred.tolist()
        doc["two_method_gap"] = float(np.max(np.abs(pred - rep.displacement)))
    _ensure_out(setup)
    path = os.path.join(setup.out_dir, f"holonomy_{setup.name}.json")
    _dump_json(doc, path)
    print(f"{setup.name}: displacement {rep.displacement.tolist()}")
    if "two_method_gap" in doc:
        print(f"curvature-integral agreement: {doc['two_method_gap']:.3e}")
    print(f"report written to {path}")
    return 0


def cmd_list_systems(args):
    for name in catalog.names():
        entry = catalog.build(name)
        print(f"{name}: {entry.description}")
        schema = catalog.parameter_schema(name)
        if not schema:
            print("  (no parameters)")
        for pname, info in schema.items():
            print(f"  {pname} = {info['default']} [{info['unit']}] {info['doc']}")
    return 0


# verification suite -----------------------------------------------------------

def _verify_one(name, seed, step):
    entry = catalog.build(name)
    sys_ = entry.system
    fs = entry.full_system
    rng = np.random.default_rng(seed)
    cfg = IntegratorConfig(method="rk4", step=step)
    q0 = np.asarray(entry.default_state[0], dtype=float)
    v0 = np.asarray(entry.default_state[1], dtype=float)
    lo = np.asarray(entry.default_region[0], dtype=float)
    hi = np.asarray(entry.default_region[1], dtype=float)
    rows = []

    def row(check, value, budget):
        rows.append({"system": name, "check": check, "value": float(value),
                     "budget": float(budget), "pass": bool(value <= budget)})

    comp = compare_full_reduced(fs, sys_, q0, v0, (0.0, 1.0), cfg)
    row("oracle_deviation", comp.deviation, 1e-6)
    row("constraint_residual", comp.constraint_residual, 1e-9)
    e_series = comp.trajectory_full.energy
    row("energy_drift_full", np.max(np.abs(e_series - e_series[0])),
        1e-8 * (1.0 + abs(e_series[0])))
    e_red = comp.trajectory_reduced.energy
    row("energy_drift_reduced", np.max(np.abs(e_red - e_red[0])),
        1e-8 * (1.0 + abs(e_red[0])))

    power = 0.0
    xi_gap = 0.0
    for _ in range(100):
        q = rng.uniform(lo, hi)
        v = rng.normal(size=sys_.n_base)
        jet = reduced_jet(sys_, q, order=1)
        alpha = jet.alpha(v)
        power = max(power, abs(float(alpha @ v)))
        xi_gap = max(xi_gap, float(np.max(np.abs(v @ jet.xi_matrix(v) - alpha))))
    row("gyroscopic_power", power, 1e-12)
    row("xi_contraction_gap", xi_gap, 1e-12)

    row("geodesic_coincidence",
        geodesic_coincidence(sys_, State(q0, v0), (0.0, 1.0), cfg), 1e-8)

    red_traj = comp.trajectory_reduced
    lifted = horizontal_lift(sys_, entry.group_model, red_traj, None)
    resid, _ = verify_lift(sys_, entry.group_model, lifted)
    row("lift_residual", resid, 1e-6)
    fiber_cols = list(fs.fiber_indices)
    rec_gap = np.max(np.abs(lifted.fiber - comp.trajectory_full.q[:, fiber_cols]))
    row("reconstruction_vs_oracle", rec_gap, 1e-5)

    region = Region(lo, hi, n_samples=25)
    report = measure_verdict(sys_, region, rng=rng)
    expected = entry.literature.get("measure_verdict")
    if expected is not None:
        rows.append({"system": name, "check": "measure_verdict",
                     "value": report.verdict, "budget": expected,
                     "pass": report.verdict == expected})
    if report.verdict == "InvariantMeasure":
        res = measure.verify_invariance(
            sys_, log_k=report.potential,
            initial_states=[State(q0, v0)], t_span=(0.0, 1.0), cfg=cfg)
        row("measure_transport_drift", res["max_drift"], 1e-6)
    return rows


def run_verify(systems=None, seed=0, step=1e-3, threads=None):
    systems = systems or catalog.names()
    if threads is None:
        threads = int(os.environ.get("CHAPLYGIN_LAB_THREADS",
                                     min(4, os.cpu_count() or 1)))
    threads = max(1, threads)
    rows = []
    if threads == 1 or len(systems) == 1:
        for name in systems:
            rows.extend(_verify_one(name, seed, step))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_verify_one, name, seed, step)
                       for name in systems]
            for fut in futures:
                rows.extend(fut.result())
    return rows


def cmd_verify(args):
    setup_systems = [args.system] if args.system else None
    rows = run_verify(setup_systems, seed=args.seed or 0,
                      step=args.step or 1e-3)
    width = max(len(r["check"]) for r in rows)
    ok = True
    for r in rows:
        status = "PASS" if r["pass"] else "FAIL"
        ok = ok and r["pass"]
        if isinstance(r["value"], float):
            print(f"[{status}] {r['system']:>18s} {r['check']:<{width}s} "
                  f"value={r['value']:.3e} budget={r['budget']:.1e}")
        else:
            print(f"[{status}] {r['system']:>18s} {r['check']:<{width}s} "
                  f"value={r['value']} expected={r['budget']}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump_json({"schema_version": SCHEMA_VERSION, "results": rows},
                   os.path.join(args.out, "verify.json"))
    print("verification " + ("PASSED" if ok else "FAILED"))
    return 0 if ok else 1


# argument parsing ---------------------------------------------------------------

def _add_common(p):
    p.add_argument("--system", help="builtin system name")
    p.add_argument("--params", action="append",
                   help="parameter overrides, k=v[,k=v...]")
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--region", help="box as lo1,lo2:hi1,hi2")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--method", choices=["rk4", "rk45"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threshold", type=float)
    p.add_argument("--q0", help="initial base coordinates, comma separated")
    p.add_argument("--v0", help="initial base velocities, comma separated")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="chaplygin-lab",
        description="reduction, invariant-measure analysis and reconstruction "
                    "for nonholonomic systems with principal-connection constraints")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="reduced geometry, classification, measure verdict")
    _add_common(p)
    p.add_argument("--grid", type=int, default=4, help="grid points per axis")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("simulate", help="integrate the reduced dynamics, write CSV/JSON")
    _add_common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("verify", help="run the full property suite")
    _add_common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("reconstruct", help="horizontal-lift a reduced trajectory")
    _add_common(p)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("holonomy", help="net fiber displacement around a base loop")
    _add_common(p)
    p.add_argument("--loop", default="square:0.5", help="loop spec, square:SIDE")
    p.add_argument("--loop-samples", dest="loop_samples", type=int, default=400)
    p.set_defaults(fn=cmd_holonomy)

    p = sub.add_parser("list-systems", help="catalog names and parameter schemas")
    p.set_defaults(fn=cmd_list_systems)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ParameterOutOfRange) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ChaplyginError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

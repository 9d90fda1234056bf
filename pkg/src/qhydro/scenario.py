"""Scenario loading, execution and reporting.

A scenario is a JSON document (see ``schema/scenario.schema.json``) naming a
grid, an initial state, an optional potential and evolution, a list of
diagnostics, an optional one-parameter sweep and optional pass/fail checks.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from scipy import stats

from . import exactsol, fieldio, foliation, hydrodiag, madelung
from . import schrodinger as sc
from .errors import PhaseNotSingleValued, ValidationError
from .fields import DEFAULT_EPSILON_NODE, Constants, Grid

REPORT_VERSION = 1
OUTPUT_ROOT_ENV = "QHYDRO_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "qhydro-out"
CONSTANT_NAMES = ("hbar", "mass", "k_B", "l", "T0", "kappa")
DEFAULT_DIAGNOSTICS = ["norm", "quantum_potential", "roundtrip"]
NONINTEGRABILITY_TOLERANCE = 1e-8
DEFAULT_FIT_SNAPSHOTS = 20


class CheckFailed(Exception):
    """A --check gate did not hold."""

    def __init__(self, failures: list[dict]):
        super().__init__(f"{len(failures)} check(s) failed")
        self.failures = failures


def _schema() -> dict:
    return json.loads(resources.files("qhydro").joinpath("schema/scenario.schema.json").read_text())


def bundled_names() -> list[str]:
    root = resources.files("qhydro").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str):
    return resources.files("qhydro").joinpath("scenarios", f"{name}.json")


def load_document(source) -> dict:
    """Read a scenario from a path or a bundled scenario name."""
    p = Path(source)
    if p.exists():
        text = p.read_text()
    elif str(source) in bundled_names():
        text = bundled_path(str(source)).read_text()
    else:
        raise FileNotFoundError(f"no scenario file or bundled scenario named {source!r}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario is not valid JSON: {exc}") from exc


def validate_document(doc: dict) -> list[str]:
    """Schema-check ``doc``; returns the names of defaulted fields."""
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"schema violation at {where}: {exc.message}") from exc
    defaulted = [f"constants.{k}" for k in CONSTANT_NAMES if k not in doc.get("constants", {})]
    for key in ("seed", "epsilon_node", "potential", "evolution", "diagnostics"):
        if key not in doc:
            defaulted.append(key)
    if doc["grid"]["dim"] == 1 and "level_sets" in doc.get("diagnostics", []):
        raise ValidationError("level_sets needs a 2D or 3D grid")
    return defaulted


def resolve(doc: dict) -> dict:
    """Scenario with every default filled in."""
    out = copy.deepcopy(doc)
    out.setdefault("schema_version", 1)
    consts = out.setdefault("constants", {})
    for k in CONSTANT_NAMES:
        consts[k] = float(consts.get(k, 1.0))
    consts.setdefault("C0", "auto")
    out.setdefault("seed", 0)
    out.setdefault("epsilon_node", DEFAULT_EPSILON_NODE)
    out.setdefault("potential", {"kind": "free"})
    out.setdefault("evolution", None)
    out.setdefault("diagnostics", list(DEFAULT_DIAGNOSTICS))
    out.setdefault("diagnostic_options", {})
    out.setdefault("checks", [])
    return out


def load(source) -> dict:
    doc = load_document(source)
    validate_document(doc)
    return resolve(doc)


# --- building blocks -------------------------------------------------------

def build_grid(spec: dict) -> Grid:
    d = spec["dim"]
    origin = spec.get("origin")
    return Grid.cube(d, spec["n"], spec["length"], origin)


def build_constants(spec: dict) -> Constants:
    return Constants(**{k: spec[k] for k in CONSTANT_NAMES})


def _vortex(grid: Grid, sigma: float, winding: int, c: Constants) -> sc.WaveField:
    if grid.dim != 2:
        raise ValidationError("vortex state needs a 2D grid")
    X, Y = grid.mesh
    z = X + 1j * Y if winding >= 0 else X - 1j * Y
    psi = z ** abs(winding) * np.exp(-(X ** 2 + Y ** 2) / (4 * sigma ** 2))
    psi = psi / np.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_volume)
    return sc.WaveField(psi, grid, c)


def build_state(spec: dict, grid: Grid, c: Constants, seed: int, potential: dict | None = None, C0="auto"):
    """Initial WaveField plus a dict of construction metadata."""
    fam = spec["family"]
    meta = {"family": fam}
    omega_default = (potential or {}).get("omega", 1.0)
    if fam == "harmonic":
        n = spec.get("n", 0)
        return sc.harmonic_eigenstate(grid, n, spec.get("omega", omega_default), c, spec.get("center")), meta
    if fam == "plane_wave":
        return sc.plane_wave(grid, spec["k"], c), meta
    if fam == "gaussian":
        return sc.gaussian_packet(grid, spec.get("x0", 0.0), spec.get("p0", 0.0), spec["sigma"], c), meta
    if fam == "coherent":
        return sc.coherent_state(grid, spec.get("x0", 0.0), spec.get("p0", 0.0), spec.get("omega", omega_default), c), meta
    if fam == "superposition":
        states = [build_state(s, grid, c, seed, potential)[0] for s in spec["components"]]
        coeffs = [complex(*v) if isinstance(v, list) else complex(v) for v in spec["coefficients"]]
        return sc.superpose(states, coeffs), meta
    if fam == "uniform":
        amp = spec.get("amplitude", c.psi0_amplitude(grid.dim))
        return sc.WaveField(np.full(grid.shape, amp, dtype=complex), grid, c), meta
    if fam == "vortex":
        return _vortex(grid, spec.get("sigma", 1.0), spec.get("winding", 1), c), meta
    if fam == "viscous":
        if "modes" in spec:
            S = exactsol.mode_profile(grid, spec["modes"], spec.get("offset", 0.0))
        else:
            r = spec["random"]
            S, modes = exactsol.random_profile(grid, r["n_modes"], r["amplitude"], r["k_max"], seed)
            S = S + spec.get("offset", 0.0)
            meta["modes"] = [m.to_dict() for m in modes]
        model = spec.get("model", "proportional")
        if "factor" in spec:
            vspec = exactsol.spec_from_factor(S, grid, spec["factor"], c, C0=C0, model=model)
        else:
            vspec = exactsol.ViscousStateSpec(S, grid, spec.get("eta_in", 0.05), c, C0, model)
        built = exactsol.construct_viscous_state(vspec)
        meta.update({"eta_in": vspec.eta_in, "C0": built.C0, "model": model, "source_mean": built.source_mean})
        return built.wavefunction, meta
    if fam == "file":
        values, g, _ = fieldio.read_field(spec["path"])
        if g.shape != grid.shape:
            raise ValidationError("field file grid does not match scenario grid")
        return sc.WaveField(np.asarray(values, dtype=complex), g, c), meta
    raise ValidationError(f"unknown state family {fam!r}")


def build_potential(spec: dict, grid: Grid, c: Constants) -> sc.Potential:
    kind = spec["kind"]
    if kind == "free":
        return sc.Potential.free(grid)
    if kind == "harmonic":
        return sc.Potential.harmonic(grid, spec.get("omega", 1.0), c, spec.get("center"))
    values, g, _ = fieldio.read_field(spec["path"])
    if g.shape != grid.shape:
        raise ValidationError("potential file grid does not match scenario grid")
    return sc.Potential.custom(grid, np.asarray(values, dtype=float))


def _steps(evo: dict, potential: dict) -> int:
    if "steps" in evo:
        return int(evo["steps"])
    if "duration" in evo:
        return max(1, int(round(evo["duration"] / evo["dt"])))
    if "periods" in evo:
        omega = potential.get("omega", 1.0)
        return max(1, int(round(evo["periods"] * 2 * math.pi / omega / evo["dt"])))
    raise ValidationError("evolution needs steps, duration or periods")


def _evolution_dt(evo: dict, potential: dict) -> tuple[float, int]:
    """dt and step count; for ``periods`` the step is adjusted to land on the period exactly."""
    n = _steps(evo, potential)
    if "periods" in evo and "steps" not in evo:
        omega = potential.get("omega", 1.0)
        return evo["periods"] * 2 * math.pi / omega / n, n
    return float(evo["dt"]), n


# --- diagnostics -----------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _fit_snapshots(traj, eps, count):
    idx = np.unique(np.linspace(0, len(traj) - 1, min(count, len(traj))).round().astype(int))
    return [madelung.decompose(traj.snapshot(int(i)), eps) for i in idx]


@dataclass
class _Context:
    scenario: dict
    grid: Grid
    constants: Constants
    wf0: sc.WaveField
    potential: sc.Potential
    traj: sc.Trajectory | None
    meta: dict
    out_dir: Path | None
    eps: float

    @property
    def analysis_state(self) -> sc.WaveField:
        return self.traj.snapshot(len(self.traj) - 1) if self.traj is not None else self.wf0


def _need_traj(ctx: _Context, name: str):
    if ctx.traj is None:
        raise ValidationError(f"diagnostic {name} needs an evolution block")


def run_diagnostics(ctx: _Context) -> dict:
    opts = ctx.scenario["diagnostic_options"]
    diags = ctx.scenario["diagnostics"]
    c, eps = ctx.constants, ctx.eps
    state = ctx.analysis_state
    fields = madelung.decompose(state, eps)
    res: dict = {}
    fit = None

    def get_fit():
        nonlocal fit
        if fit is None:
            snaps = _fit_snapshots(ctx.traj, eps, opts.get("fit_snapshots", DEFAULT_FIT_SNAPSHOTS)) if ctx.traj is not None else [fields]
            fit = hydrodiag.fit_viscosity(snaps, model=opts.get("fit_model", "proportional"), weight=opts.get("fit_weight", "density"))
        return fit

    for name in diags:
        if name == "norm":
            r = {"norm": state.norm()}
            if ctx.traj is not None:
                rho = np.abs(ctx.traj.psi) ** 2
                r.update({"norm_drift": ctx.traj.norm_drift(), "density_drift": float(np.max(np.abs(rho - rho[0])))})
            res[name] = r
        elif name == "quantum_potential":
            qp = madelung.quantum_potential(fields, tolerance=math.inf)
            E = sc.energy_expectation(state, ctx.potential)
            m = fields.mask.active
            gap = float(np.max(np.abs(fields.U[m] + ctx.potential.values[m] - E)))
            res[name] = {"forms_discrepancy": qp.max_relative_discrepancy, "energy": E, "max_abs_U_plus_V_minus_E": gap}
        elif name == "roundtrip":
            phase = madelung.unwrap_phase(state, epsilon_node=eps)
            r = {"nonintegrability": phase.nonintegrability}
            try:
                rebuilt = madelung.reconstruct(fields, phase, NONINTEGRABILITY_TOLERANCE)
            except PhaseNotSingleValued:
                r.update({"rejected": True, "error": None})
            else:
                r.update({"rejected": False, "error": madelung.roundtrip_error(state, rebuilt, fields.mask)})
            res[name] = r
        elif name == "born_boltzmann":
            res[name] = {"gap": madelung.born_boltzmann_gap(fields)}
        elif name == "curl":
            res[name] = {"defect": madelung.curl_defect(fields)}
        elif name == "schrodinger_residual":
            _need_traj(ctx, name)
            res[name] = {"value": sc.schrodinger_residual(ctx.traj, eps)}
        elif name == "continuity_residual":
            _need_traj(ctx, name)
            res[name] = {"value": madelung.continuity_residual(ctx.traj, eps)}
        elif name == "euler_residual":
            _need_traj(ctx, name)
            t, e = hydrodiag.euler_residual_series(ctx.traj, eps)
            res[name] = {"value": float(e.max()), "rms": float(np.sqrt(np.mean(e ** 2)))}
        elif name == "ns_residual":
            _need_traj(ctx, name)
            eta = opts.get("eta", get_fit().eta)
            no_u = hydrodiag.euler_residual_series(ctx.traj, eps, include_quantum=False)[1]
            ns = hydrodiag.ns_residual_series(ctx.traj, eta, eps, opts.get("fit_model", "proportional"))[1]
            res[name] = {"eta": eta, "value": float(ns.max()), "rms": float(np.sqrt(np.mean(ns ** 2))),
                         "euler_without_U_rms": float(np.sqrt(np.mean(no_u ** 2)))}
        elif name == "viscosity_fit":
            f = get_fit()
            eta0 = c.hbar * c.psi0_amplitude(ctx.grid.dim) ** 2
            res[name] = dict(f.to_dict(), eta_natural=f.eta / eta0, weight=opts.get("fit_weight", "density"))
        elif name == "compensation":
            eta = ctx.meta.get("eta_in", opts.get("eta", get_fit().eta))
            model = ctx.meta.get("model", opts.get("fit_model", "proportional"))
            res[name] = dict(exactsol.verify_compensation(state, eta, model, eps).to_dict(), eta=eta)
        elif name == "stress_tensor":
            res[name] = {"gap": hydrodiag.stress_tensor_check(fields, opts.get("eta", 1.0), opts.get("zeta", 0.0))}
        elif name == "entropy":
            th = hydrodiag.entropy_density(fields, opts.get("entropy_weight", "probability"))
            res[name] = {"s_total": th.s_total, "volume": th.volume, "weight": opts.get("entropy_weight", "probability")}
        elif name == "eta_over_s":
            th = hydrodiag.entropy_density(fields, opts.get("entropy_weight", "probability"))
            r = hydrodiag.eta_over_s(get_fit(), th, c.hbar, c.k_B)
            res[name] = {"value": r.value, "kss_ratio": r.kss_ratio, "defined": r.defined, "kss_satisfied": r.kss_satisfied,
                         "value_over_hbar_per_kB": r.value * c.k_B / c.hbar}
        elif name == "entropy_rate":
            _need_traj(ctx, name)
            er = hydrodiag.entropy_rate(ctx.traj, eps, opts.get("entropy_weight", "probability"))
            res[name] = {"dsdt_norm": er.dsdt_norm, "heat_rhs_norm": er.heat_rhs_norm, "heat_rhs_gap": float(er.heat_rhs_gap.max())}
        elif name == "boltzmann_time":
            bt = hydrodiag.boltzmann_time(state, eps)
            res[name] = {"tau_B": bt.tau_B, "temperature": bt.temperature, "amplitude_rms": bt.amplitude}
        elif name == "orthogonality":
            rep = foliation.orthogonality_field(fields)
            res[name] = {"g_max": rep.g_max, "g_rms": rep.g_rms, "g_max_l2": rep.g_max_dimensionless}
        elif name == "level_sets":
            res[name] = _level_sets(ctx, state, fields, opts)
    if ctx.traj is not None and ctx.out_dir is not None:
        _write_timeseries(ctx, opts)
    if opts.get("dump_fields") and ctx.out_dir is not None:
        _dump_fields(ctx, state, fields)
    return res


def _level_sets(ctx, state, fields, opts) -> dict:
    grid = ctx.grid
    if grid.dim == 3:
        axis, index = opts.get("slice_axis", 2), opts.get("slice_index", grid.shape[opts.get("slice_axis", 2)] // 2)
        keep = [a for a in range(3) if a != axis]
        sub = Grid(tuple(grid.shape[a] for a in keep), tuple(grid.extent[a] for a in keep), tuple(grid.origin[a] for a in keep))
        psi2 = foliation.extract_slice(state.psi, axis, index)
        state = sc.WaveField(psi2, sub, state.constants)
        fields = madelung.decompose(state, ctx.eps)
        grid = sub
    phase = madelung.unwrap_phase(state, epsilon_node=ctx.eps)
    n_s, n_i = opts.get("s_levels", 7), opts.get("i_levels", 7)
    S = fields.S
    s_levels = np.linspace(np.nanmin(S), np.nanmax(S), n_s + 2)[1:-1]
    s_bundle = foliation.extract_level_sets(S, grid, s_levels, "S-const")
    out = {"s_levels": s_levels.tolist(), "s_polylines": len(s_bundle.polylines)}
    bundles = [s_bundle]
    if phase.nonintegrability >= NONINTEGRABILITY_TOLERANCE:
        out.update({"i_family": "rejected", "nonintegrability": phase.nonintegrability})
        audit = foliation.CrossingAudit(np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros(0))
    else:
        I = phase.I
        i_levels = np.linspace(np.nanmin(I), np.nanmax(I), n_i + 2)[1:-1]
        i_bundle = foliation.extract_level_sets(I, grid, i_levels, "I-const", phase=phase)
        bundles.append(i_bundle)
        audit = foliation.crossing_audit(fields, s_levels, i_levels, phase)
        out.update({"i_levels": i_levels.tolist(), "i_polylines": len(i_bundle.polylines)})
    out["crossings"] = audit.summary(opts.get("g_l2_threshold", 0.01), ctx.constants.l)
    if ctx.out_dir is not None:
        for b in bundles:
            b.to_csv(ctx.out_dir / f"contours_{b.family.split('-')[0]}.csv")
        foliation.write_summary(ctx.out_dir / "foliation.json", audit, bundles, l_scale=ctx.constants.l)
    return out


def _write_timeseries(ctx: _Context, opts: dict):
    traj, eps = ctx.traj, ctx.eps
    if len(traj) < 3:
        return
    t, euler = hydrodiag.euler_residual_series(traj, eps)
    _, cont = madelung.continuity_residual_series(traj, eps)
    er = hydrodiag.entropy_rate(traj, eps, opts.get("entropy_weight", "probability"))
    etas = []
    for i in sc.central_difference_indices(traj):
        f = hydrodiag.fit_viscosity(madelung.decompose(traj.snapshot(i), eps), model=opts.get("fit_model", "proportional"),
                                    weight=opts.get("fit_weight", "density"))
        etas.append(f.eta)
    with (ctx.out_dir / "timeseries.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "dsdt_norm", "euler_residual", "continuity_residual", "eta_fit"])
        for row in zip(t, er.dsdt, euler, cont, etas):
            w.writerow([repr(float(v)) for v in row])


def _dump_fields(ctx: _Context, state, fields):
    d = ctx.out_dir / "fields"
    d.mkdir(exist_ok=True)
    fieldio.write_field(d / "psi", state.psi, ctx.grid, "complex")
    fieldio.write_field(d / "S", fields.S, ctx.grid, "scalar")
    fieldio.write_field(d / "U", fields.U, ctx.grid, "scalar")
    fieldio.write_field(d / "v", fields.v, ctx.grid, "vector")
    fieldio.write_field(d / "mask", fields.mask.active.astype(float), ctx.grid, "mask")


# --- checks ----------------------------------------------------------------

def resolve_metric(report: dict, path: str) -> list:
    """Values at a dotted path; ``*`` fans out over list items."""
    nodes = [report]
    for part in path.split("."):
        nxt = []
        for node in nodes:
            if part == "*":
                if not isinstance(node, list):
                    raise ValidationError(f"metric {path!r}: '*' applied to a non-list")
                nxt.extend(node)
            elif isinstance(node, dict) and part in node:
                nxt.append(node[part])
            elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
                nxt.append(node[int(part)])
            else:
                raise ValidationError(f"metric {path!r} not found in report")
        nodes = nxt
    return nodes


def evaluate_checks(report: dict, checks: list[dict]) -> list[dict]:
    out = []
    for chk in checks:
        values = resolve_metric(report, chk["metric"])
        ok = True
        for v in values:
            if "equals" in chk and v != chk["equals"]:
                ok = False
            if "max" in chk and (v is None or not v <= chk["max"]):
                ok = False
            if "min" in chk and (v is None or not v >= chk["min"]):
                ok = False
        out.append(dict(chk, values=values, passed=ok))
    return out


# --- running ---------------------------------------------------------------

SWEEP_TARGETS = {
    "hbar": ("constants", "hbar"), "mass": ("constants", "mass"), "l": ("constants", "l"),
    "eta_in": ("state", "eta_in"), "factor": ("state", "factor"), "n": ("state", "n"),
    "sigma": ("state", "sigma"), "p0": ("state", "p0"), "dt": ("evolution", "dt"), "grid.n": ("grid", "n"),
}


def apply_override(scenario: dict, parameter: str, value) -> dict:
    s = copy.deepcopy(scenario)
    s.pop("sweep", None)
    if parameter == "omega":
        if s["potential"].get("kind") == "harmonic":
            s["potential"]["omega"] = float(value)
        if "omega" in s["state"] or s["state"]["family"] in ("harmonic", "coherent"):
            s["state"]["omega"] = float(value)
        return s
    block, key = SWEEP_TARGETS[parameter]
    if block == "evolution" and s["evolution"] is None:
        raise ValidationError("dt sweep needs an evolution block")
    if parameter in ("n", "grid.n"):
        value = int(value)
    else:
        value = float(value)
    s[block][key] = value
    return s


def _execute(scenario: dict, out_dir: Path | None) -> dict:
    grid = build_grid(scenario["grid"])
    c = build_constants(scenario["constants"])
    pot_spec = scenario["potential"]
    potential = build_potential(pot_spec, grid, c)
    wf0, meta = build_state(scenario["state"], grid, c, scenario["seed"], pot_spec, scenario["constants"].get("C0", "auto"))
    traj = None
    evo = scenario["evolution"]
    if evo is not None:
        dt, n = _evolution_dt(evo, pot_spec)
        traj = sc.propagate(wf0, potential, dt, n, evo.get("stride"), evo.get("method", "split-step"))
    ctx = _Context(scenario, grid, c, wf0, potential, traj, meta, out_dir, scenario["epsilon_node"])
    results = run_diagnostics(ctx)
    state_meta = {k: v for k, v in meta.items() if k != "family"}
    if state_meta:
        results["state"] = state_meta
    if traj is not None:
        results["evolution"] = {"dt": traj.dt, "steps": int(round((traj.times[-1] - traj.times[0]) / traj.dt)),
                                "snapshots": len(traj), "final_time": float(traj.times[-1])}
    return _clean(results)


def _point_worker(args):
    scenario, parameter, value, out_dir = args
    t0 = time.perf_counter()
    point = apply_override(scenario, parameter, value)
    d = Path(out_dir) / "points" / f"{parameter}={value!r}"
    d.mkdir(parents=True, exist_ok=True)
    results = _execute(point, d)
    _write_json(d / "report.json", {"report_version": REPORT_VERSION, "value": value, "results": results})
    return value, results, time.perf_counter() - t0


def loglog_fit(x, y) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray([np.nan if v is None else v for v in y], dtype=float)
    if len(x) < 2 or np.any(~np.isfinite(y)) or np.any(y <= 0) or np.any(x <= 0):
        return {"slope": None, "stderr": None, "intercept": None, "strictly_increasing": None}
    r = stats.linregress(np.log(x), np.log(y))
    order = np.argsort(x)
    return {"slope": float(r.slope), "stderr": float(r.stderr) if len(x) > 2 else None,
            "intercept": float(r.intercept), "strictly_increasing": bool(np.all(np.diff(y[order]) > 0))}


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def output_root(cli_out: str | None) -> Path:
    if cli_out:
        return Path(cli_out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


def run_scenario(scenario: dict, root: Path, jobs: int = 1, check: bool = False) -> tuple[dict, Path]:
    """Execute a resolved scenario; writes report.json, timing.json and CSVs under root/name.

    With ``check`` the scenario's checks are gates and a failure raises
    CheckFailed after the report is written.
    """
    out_dir = Path(root) / scenario.get("output", scenario["name"])
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    timing: dict = {}
    report: dict = {"report_version": REPORT_VERSION, "scenario": scenario["name"], "resolved": scenario}
    sweep = scenario.get("sweep")
    if sweep is None:
        report["results"] = _execute(scenario, out_dir)
    else:
        param, values = sweep["parameter"], sweep["values"]
        tasks = [(scenario, param, v, str(out_dir)) for v in values]
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                done = list(pool.map(_point_worker, tasks))
        else:
            done = [_point_worker(t) for t in tasks]
        done.sort(key=lambda item: item[0])
        points = [{"value": v, "results": r} for v, r, _ in done]
        timing["points"] = {repr(v): dt for v, _, dt in done}
        sweep_out = {"parameter": param, "values": [p["value"] for p in points]}
        if "fit" in sweep:
            ys = [resolve_metric(p["results"], sweep["fit"]["y"])[0] for p in points]
            sweep_out["fit"] = dict(loglog_fit(sweep_out["values"], ys), y=sweep["fit"]["y"])
        report["sweep"] = sweep_out
        report["points"] = points
        _write_sweep_csv(out_dir / "sweep.csv", param, points)
    report["checks"] = evaluate_checks(report, scenario["checks"])
    report = _clean(report)
    _write_json(out_dir / "report.json", report)
    from . import kernels

    timing.update({"total_seconds": time.perf_counter() - t0, "kernel_backend": kernels.BACKEND, "jobs": jobs})
    _write_json(out_dir / "timing.json", _clean(timing))
    if check:
        failed = [c for c in report["checks"] if not c["passed"]]
        if failed:
            raise CheckFailed(failed)
    return report, out_dir


def _flatten(prefix: str, obj, out: dict):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else k, obj[k], out)
    elif isinstance(obj, (int, float, bool)) or obj is None:
        out[prefix] = obj


def _write_sweep_csv(path: Path, param: str, points: list[dict]):
    rows = []
    for p in points:
        flat: dict = {}
        _flatten("", p["results"], flat)
        rows.append(flat)
    cols = sorted({k for r in rows for k in r})
    # the viscosity column leads when present
    if "viscosity_fit.eta" in cols:
        cols.remove("viscosity_fit.eta")
        cols.insert(0, "viscosity_fit.eta")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([param] + [("eta_fit" if c == "viscosity_fit.eta" else c) for c in cols])
        for p, r in zip(points, rows):
            w.writerow([repr(p["value"])] + ["" if r.get(c) is None else repr(r.get(c)) for c in cols])

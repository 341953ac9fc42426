"""Configuration ingestion, case orchestration and result emission.

A scenario file is structured JSON validated against the shipped schema;
units declared in hertz or SI are converted to per-unit here, at the edge.
Each case wires the module pipeline together and returns a RunReport whose
emission (CSV/JSON, 6 significant digits) is byte-stable for a given config.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels, alloc, freqcore, reserve, statespace
from .errors import ConfigError
from .freqcore import Disturbance, GridParams, SafetyLimits, VppGain
from .reserve import PtdfLine, PtdfNetwork
from .statespace import DeviceParams

CASES = ("min-reserve", "allocate", "allocate-robust", "region", "simulate",
         "fit-stability", "sensitivity-h0", "sensitivity-dp", "compare-regions")

_H0_SWEEP = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
_DP_SWEEP = [0.21, 0.23, 0.25, 0.27, 0.29, 0.31, 0.33, 0.35]


@dataclass(frozen=True)
class SolverKnobs:
    dt_trajectory: float = 0.01
    dt_constraints: float = 0.1
    dt_objective: float = 1.0
    lattice_n: int = 30
    bisect_tol: float = 1e-4
    rk4_dt: float = 0.001
    sim_horizon: float = 60.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    grid: GridParams
    device: DeviceParams
    disturbance: Disturbance
    limits: SafetyLimits
    ibrs: alloc.IbrParams
    market: alloc.MarketParams
    network: PtdfNetwork | None
    caps: tuple
    solver: SolverKnobs
    reference_gain: VppGain | None = None
    realization: tuple | None = None
    compare_gains: tuple = ()
    h0_sweep: tuple = tuple(_H0_SWEEP)
    dp_sweep: tuple = tuple(_DP_SWEEP)


def _schema():
    with resources.files("vppres.configs").joinpath("config_schema.json").open() as fh:
        return json.load(fh)


def bundled_config_path(name="ieee39_table1"):
    return resources.files("vppres.configs").joinpath(f"{name}.json")


def load_config(path) -> ScenarioConfig:
    """Parse and validate a scenario file; unknown keys are rejected."""
    import jsonschema

    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None

    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config schema violation at {where}: {e.message}")

    g = raw["grid"]
    f0 = g["f0_hz"]
    grid = GridParams(h0=g["h0"], d0=g["d0"], r_droop=g["r_droop"],
                      t_sg=g["t_sg"], f0=f0,
                      f_db1=g["f_db1_hz"] / f0, f_db2=g["f_db2_hz"] / f0)
    d = raw["device"]
    device = DeviceParams.from_si(
        kp_p=d["kp_p"], kp_i=d["kp_i"], kr_p=d["kr_p"], kr_i=d["kr_i"],
        l1_henry=d["l1_mh"] * 1e-3, r1_ohm=d["r1_ohm"], i0_v=d["i0_v"],
        f0_hz=f0, v_base=d["v_base_v"],
        s_base_va=raw["market"]["base_mva"] * 1e6)
    dd = raw["disturbance"]
    disturbance = Disturbance(
        delta_p=dd["delta_p"], p_g=dd["p_g"], p_v=dd["p_v"],
        p_l=dd["p_g"] + dd["p_v"] + dd["delta_p"])
    li = raw["limits"]
    limits = SafetyLimits(rocof_lim=li["rocof_hz_per_s"] / f0,
                          nadir_lim=li["nadir_hz"] / f0,
                          qss_lim=li["qss_hz"] / f0,
                          sigma=li["sigma"],
                          settle_band=li.get("settle_band", 0.01))
    ib = raw["ibrs"]
    n = len(ib["c_r"])
    if len(ib["p_rated"]) != n or ("fluctuation" in ib and len(ib["fluctuation"]) != n):
        raise ConfigError("ibrs lists must share one length")
    ibrs = alloc.IbrParams(
        c_r=tuple(ib["c_r"]), p_rated=tuple(ib["p_rated"]),
        h_bounds=tuple((ib["h_min"], ib["h_max"]) for _ in range(n)),
        d_bounds=tuple((ib["d_min"], ib["d_max"]) for _ in range(n)),
        fluctuation=tuple(ib["fluctuation"]) if "fluctuation" in ib else None)
    mk = raw["market"]
    market = alloc.MarketParams(c_f=mk["c_f"], c_p=mk["c_p"],
                                horizon=mk["horizon_s"], base_mva=mk["base_mva"])
    network = None
    if "network" in raw:
        nw = raw["network"]
        lines = tuple(PtdfLine(line_id=l["id"], limit=l["limit"],
                               s_vpp=l["s_vpp"], s_g=tuple(l["s_g"]),
                               s_d=tuple(l["s_d"])) for l in nw["lines"])
        network = PtdfNetwork(lines=lines, sg_outputs=tuple(nw["sg_outputs"]),
                              loads=tuple(nw["loads"]))
    sv = raw.get("solver", {})
    solver = SolverKnobs(
        dt_trajectory=sv.get("dt_trajectory", 0.01),
        dt_constraints=sv.get("dt_constraints", 0.1),
        dt_objective=sv.get("dt_objective", 1.0),
        lattice_n=sv.get("lattice_n", 30),
        bisect_tol=sv.get("bisect_tol", 1e-4),
        rk4_dt=sv.get("rk4_dt", 0.001),
        sim_horizon=sv.get("sim_horizon_s", 60.0))
    ref_gain = None
    if "reference_gain" in raw:
        ref_gain = VppGain(raw["reference_gain"]["h_vpp"],
                           raw["reference_gain"]["d_vpp"])
    realization = tuple(raw["robust"]["realization"]) if "robust" in raw else None
    if realization is not None and len(realization) != n:
        raise ConfigError("robust.realization length must match ibrs lists")
    compare_gains = tuple(
        VppGain(p[0], p[1]) for p in raw.get("compare_gains", []))
    return ScenarioConfig(
        name=raw.get("name", Path(str(path)).stem), grid=grid, device=device,
        disturbance=disturbance, limits=limits, ibrs=ibrs, market=market,
        network=network, caps=(raw["caps"]["h_max"], raw["caps"]["d_max"]),
        solver=solver, reference_gain=ref_gain, realization=realization,
        compare_gains=compare_gains,
        h0_sweep=tuple(raw.get("sweeps", {}).get("h0", _H0_SWEEP)),
        dp_sweep=tuple(raw.get("sweeps", {}).get("delta_p", _DP_SWEEP)))


@dataclass
class RunReport:
    case: str
    config_name: str
    data: dict = field(default_factory=dict)


def default_lattice(grid, dist, limits, caps, n):
    """Fit lattice over the sub-box already admitted by the analytic RoCoF
    and Qss bounds, n x n uniform.  The decision lives in this box, and the
    bilinear approximation of the decay surface is accurate within it."""
    h_lo = max(0.1, dist.delta_p / (2.0 * limits.rocof_lim) - grid.h0)
    d_lo = max(0.1, (dist.delta_p + grid.r_droop * grid.f_db2
                     - limits.qss_lim * (grid.d0 + grid.r_droop))
               / (limits.qss_lim - grid.f_db1))
    h_lo = min(h_lo, caps[0] * 0.9)
    d_lo = min(d_lo, caps[1] * 0.9)
    return (np.linspace(h_lo, caps[0], n), np.linspace(d_lo, caps[1], n))


def _fit(cfg, grid=None, dist=None):
    grid = grid or cfg.grid
    dist = dist or cfg.disturbance
    lattice = default_lattice(grid, dist, cfg.limits, cfg.caps, cfg.solver.lattice_n)
    return statespace.fit_stability_surface(grid, cfg.device, dist, lattice)


def _fit_section(fit):
    return {
        "b": [fit.b1, fit.b2, fit.b3, fit.b4],
        "rms_error": fit.rms_error,
        "accuracy_in_sample": fit.accuracy_in_sample,
        "accuracy_held_out": fit.accuracy_held_out,
        "lattice": list(fit.grid_spec),
    }


def _decision_metrics(cfg, gain, grid=None, dist=None):
    grid = grid or cfg.grid
    dist = dist or cfg.disturbance
    times = np.arange(0.0, cfg.solver.sim_horizon + cfg.solver.dt_trajectory / 2,
                      cfg.solver.dt_trajectory)
    traj = freqcore.freq_response(grid, gain, dist, times)
    met = freqcore.metrics(traj, grid, gain, dist, cfg.limits.settle_band)
    f0 = grid.f0
    return {
        "rocof_hz_per_s": met.rocof_max * f0,
        "nadir_hz_dev": -met.nadir * f0,
        "nadir_hz_abs": f0 + met.nadir * f0,
        "t_nadir_s": met.t_nadir,
        "qss_hz_dev": -met.qss * f0,
        "settle_time_s": met.settle_time,
    }


def _min_reserve_pipeline(cfg, grid=None, dist=None):
    grid = grid or cfg.grid
    dist = dist or cfg.disturbance
    fit = _fit(cfg, grid, dist)
    region = reserve.feasible_region(grid, cfg.device, dist, cfg.limits, fit, cfg.caps)
    decision = reserve.min_reserve(region, grid, cfg.device, dist,
                                   cfg.market.horizon, cfg.solver.dt_trajectory,
                                   cfg.market.base_mva, cfg.solver.bisect_tol)
    peak = reserve.reserve_peak_baseline(decision.gain, grid, cfg.device, dist,
                                         cfg.market.horizon, cfg.solver.dt_trajectory,
                                         cfg.market.base_mva)
    return fit, region, decision, peak


def run_case(cfg: ScenarioConfig, which: str) -> RunReport:
    """Execute one case of the study and collect its numbers."""
    if which not in CASES:
        raise ConfigError(f"unknown case {which!r}; expected one of {CASES}")
    report = RunReport(case=which, config_name=cfg.name)
    handler = {
        "fit-stability": _case_fit,
        "region": _case_region,
        "min-reserve": _case_min_reserve,
        "simulate": _case_simulate,
        "allocate": _case_allocate,
        "allocate-robust": _case_allocate_robust,
        "compare-regions": _case_compare_regions,
        "sensitivity-h0": _case_sensitivity_h0,
        "sensitivity-dp": _case_sensitivity_dp,
    }[which]
    handler(cfg, report)
    return report


def _case_fit(cfg, report):
    report.data["stability_fit"] = _fit_section(_fit(cfg))


def _case_region(cfg, report):
    fit = _fit(cfg)
    region = reserve.feasible_region(cfg.grid, cfg.device, cfg.disturbance,
                                     cfg.limits, fit, cfg.caps)
    report.data["stability_fit"] = _fit_section(fit)
    report.data["region"] = {
        "h_min_rocof": region.h_min_rocof,
        "d_min_qss": region.d_min_qss,
        "h_max": region.h_max,
        "d_max": region.d_max,
        "empty": region.is_empty,
    }
    report.data["boundary"] = [
        {"h_vpp": h, "d_vpp": d, "constraint": cid}
        for h, d, cid in region.boundary_samples()
    ]
    if cfg.reference_gain is not None:
        report.data["region"]["reference_gain_feasible"] = \
            region.contains(cfg.reference_gain)


def _case_min_reserve(cfg, report):
    fit, region, decision, peak = _min_reserve_pipeline(cfg)
    report.data["stability_fit"] = _fit_section(fit)
    improvement = 1.0 - decision.energy_mwh / peak.energy_mwh
    report.data["reserve"] = {
        "h_vpp_re": decision.gain.h_vpp,
        "d_vpp_re": decision.gain.d_vpp,
        "energy_min_mwh": decision.energy_mwh,
        "energy_peak_mwh": peak.energy_mwh,
        "peak_power_pu": decision.peak_power,
        "improvement_pct": improvement * 100.0,
        "fallback_used": decision.fallback_used,
    }
    report.data["metrics"] = _decision_metrics(cfg, decision.gain)
    report.data["profile"] = {
        "times": decision.profile_times.tolist(),
        "dp_vpp": decision.reserve_profile.tolist(),
    }
    if cfg.network is not None:
        flows = reserve.line_flow_check(cfg.network, decision.profile_times,
                                        decision.reserve_profile)
        report.data["line_flows"] = [
            {"line": r.line_id, "max_flow_pu": r.max_flow, "limit_pu": r.limit,
             "ok": r.ok} for r in flows]


def _case_simulate(cfg, report):
    gain = cfg.reference_gain
    if gain is None:
        _, _, decision, _ = _min_reserve_pipeline(cfg)
        gain = decision.gain
    model = statespace.assemble(cfg.grid, cfg.device, gain, cfg.disturbance)
    x0 = statespace.equilibrium(model)
    sim = statespace.simulate(model, x0, cfg.solver.sim_horizon, cfg.solver.rk4_dt)
    dfg = sim.delta_f_grid
    nadir_ode = float(dfg.min())
    tn_ode = float(sim.times[int(np.argmin(dfg))])
    tn = freqcore.nadir_time(cfg.grid, gain, cfg.disturbance)
    nadir_cf = float(freqcore._branch2(cfg.grid, gain, cfg.disturbance, tn)[0])
    stride = max(1, int(round(cfg.solver.dt_trajectory / cfg.solver.rk4_dt)))
    report.data["simulation"] = {
        "gain": {"h_vpp": gain.h_vpp, "d_vpp": gain.d_vpp},
        "nadir_ode_pu": nadir_ode,
        "t_nadir_ode_s": tn_ode,
        "nadir_closed_form_pu": nadir_cf,
        "nadir_rel_err": abs(nadir_ode - nadir_cf) / abs(nadir_cf),
        "t_act_vpp_s": sim.t_act_vpp,
        "t_act_sg_s": sim.t_act_sg,
        "backend": _kernels.BACKEND,
    }
    report.data["profile"] = {
        "times": sim.times[::stride].tolist(),
        "dp_vpp": sim.dp_vpp[::stride].tolist(),
    }


def _alloc_inputs(cfg, target):
    t_con = np.arange(0.0, cfg.market.horizon + cfg.solver.dt_constraints / 2,
                      cfg.solver.dt_constraints)
    t_obj = np.arange(0.0, cfg.market.horizon + cfg.solver.dt_objective / 2,
                      cfg.solver.dt_objective)
    basis_con = alloc.injection_basis(cfg.grid, target, cfg.disturbance, t_con)
    basis_obj = alloc.injection_basis(cfg.grid, target, cfg.disturbance, t_obj)
    return basis_con, basis_obj


def _allocation_target(cfg):
    if cfg.reference_gain is not None:
        return cfg.reference_gain
    _, _, decision, _ = _min_reserve_pipeline(cfg)
    return decision.gain


def _plan_section(plan, ibrs, market):
    margins = market.c_f - np.asarray(ibrs.c_r)
    return {
        "h_i": plan.h_i.tolist(),
        "d_i": plan.d_i.tolist(),
        "objective_usd": plan.objective,
        "revenue_usd": plan.revenue,
        "cost_usd": plan.cost,
        "per_ibr_energy_mwh": plan.per_ibr_energy.tolist(),
        "per_ibr_usd": (margins * plan.per_ibr_energy).tolist(),
        "binding": list(plan.binding),
        "clamped": plan.clamped,
    }


def _case_allocate(cfg, report):
    target = _allocation_target(cfg)
    basis_con, basis_obj = _alloc_inputs(cfg, target)
    opt = alloc.solve_allocation(basis_con, cfg.ibrs, cfg.market, target,
                                 objective_basis=basis_obj)
    even = alloc.allocate_even(basis_con, cfg.ibrs, cfg.market, target,
                               objective_basis=basis_obj)
    prop = alloc.allocate_prop(basis_con, cfg.ibrs, cfg.market, target,
                               objective_basis=basis_obj)
    report.data["target"] = {"h_vpp": target.h_vpp, "d_vpp": target.d_vpp}
    report.data["allocation"] = _plan_section(opt, cfg.ibrs, cfg.market)
    report.data["baselines"] = {
        "even": _plan_section(even, cfg.ibrs, cfg.market),
        "prop": _plan_section(prop, cfg.ibrs, cfg.market),
        "opt_over_even_pct": (opt.objective / even.objective - 1.0) * 100.0,
        "opt_over_prop_pct": (opt.objective / prop.objective - 1.0) * 100.0,
    }


def _case_allocate_robust(cfg, report):
    if cfg.ibrs.fluctuation is None:
        raise ConfigError("allocate-robust requires ibrs.fluctuation")
    target = _allocation_target(cfg)
    basis_con, basis_obj = _alloc_inputs(cfg, target)
    det = alloc.solve_allocation(basis_con, cfg.ibrs, cfg.market, target,
                                 objective_basis=basis_obj)
    rob = alloc.solve_allocation_robust(basis_con, cfg.ibrs, cfg.market, target,
                                        objective_basis=basis_obj)
    report.data["target"] = {"h_vpp": target.h_vpp, "d_vpp": target.d_vpp}
    report.data["allocation"] = _plan_section(rob, cfg.ibrs, cfg.market)
    report.data["deterministic"] = _plan_section(det, cfg.ibrs, cfg.market)
    if cfg.realization is not None:
        realized = (1.0 + np.asarray(cfg.realization)) * np.asarray(cfg.ibrs.p_rated)
        section = {}
        for label, plan in (("deterministic", det), ("robust", rob)):
            inj = alloc.plan_injections(basis_con, plan)
            actual = np.minimum(inj, realized[None, :])
            pun = alloc.punishment(basis_con.times, inj.sum(axis=1),
                                   actual.sum(axis=1), cfg.market)
            section[label] = {
                "punishment_usd": pun,
                "loss_pct": -pun / plan.objective * 100.0,
            }
        report.data["realization"] = {
            "fractions": list(cfg.realization), **section}


def _case_compare_regions(cfg, report):
    rows = []
    for gain in cfg.compare_gains:
        met = _decision_metrics(cfg, gain)
        rows.append({"h_vpp": gain.h_vpp, "d_vpp": gain.d_vpp, **met})
    report.data["compare"] = rows


def _sweep(cfg, label, values, make_point):
    rows = []
    for v in values:
        grid, dist = make_point(v)
        _, _, decision, peak = _min_reserve_pipeline(cfg, grid, dist)
        idle = 1.0 - decision.energy_mwh / peak.energy_mwh
        rows.append({
            label: v,
            "h_vpp_re": decision.gain.h_vpp,
            "d_vpp_re": decision.gain.d_vpp,
            "energy_min_mwh": decision.energy_mwh,
            "energy_peak_mwh": peak.energy_mwh,
            "idle_reserve_ratio": idle,
        })
    report_rows = {"parameter": label, "rows": rows}
    return report_rows


def _case_sensitivity_h0(cfg, report):
    def make_point(h0):
        g = cfg.grid
        return GridParams(h0=h0, d0=g.d0, r_droop=g.r_droop, t_sg=g.t_sg,
                          f0=g.f0, f_db1=g.f_db1, f_db2=g.f_db2), cfg.disturbance
    report.data["sensitivity"] = _sweep(cfg, "h0", cfg.h0_sweep, make_point)


def _case_sensitivity_dp(cfg, report):
    def make_point(dp):
        d = cfg.disturbance
        return cfg.grid, Disturbance(delta_p=dp, p_g=d.p_g, p_v=d.p_v,
                                     p_l=d.p_g + d.p_v + dp)
    report.data["sensitivity"] = _sweep(cfg, "delta_p", cfg.dp_sweep, make_point)


def _sig6(value):
    if isinstance(value, float):
        if math.isnan(value):
            return None
        return float(f"{value:.6g}")
    if isinstance(value, dict):
        return {k: _sig6(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sig6(v) for v in value]
    return value


def emit(report: RunReport, fmt: str, out_dir) -> list:
    """Write the report; returns the created paths.

    `json` writes report.json only; `csv` additionally writes the tabular
    views present in the report.  All numbers carry 6 significant digits and
    the byte stream is deterministic for identical inputs.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    created = []

    def write(path, text):
        try:
            path.write_text(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from None
        created.append(path)

    payload = {"case": report.case, "config": report.config_name,
               "data": _sig6(report.data)}
    write(out / "report.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if fmt == "json":
        return created

    def csv_lines(header, rows):
        lines = [",".join(header)]
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, float):
                    cells.append(f"{cell:.6g}")
                else:
                    cells.append(str(cell))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    data = report.data
    if "metrics" in data:
        rows = sorted(data["metrics"].items())
        write(out / "metrics.csv", csv_lines(("metric", "value"), rows))
    if "compare" in data:
        keys = ["h_vpp", "d_vpp", "rocof_hz_per_s", "nadir_hz_abs",
                "qss_hz_dev", "settle_time_s"]
        rows = [[r[k] for k in keys] for r in data["compare"]]
        write(out / "metrics.csv", csv_lines(keys, rows))
    if "boundary" in data:
        rows = [(r["h_vpp"], r["d_vpp"], r["constraint"]) for r in data["boundary"]]
        write(out / "region_boundary.csv",
              csv_lines(("h_vpp", "d_vpp", "constraint"), rows))
    if "profile" in data:
        rows = list(zip(data["profile"]["times"], data["profile"]["dp_vpp"]))
        write(out / "reserve_profile.csv", csv_lines(("t_s", "dp_vpp_pu"), rows))
    if "allocation" in data:
        a = data["allocation"]
        rows = [(i, h, d, e, u) for i, (h, d, e, u) in enumerate(
            zip(a["h_i"], a["d_i"], a["per_ibr_energy_mwh"], a["per_ibr_usd"]),
            start=1)]
        write(out / "allocation.csv",
              csv_lines(("ibr", "h_i", "d_i", "energy_mwh", "usd"), rows))
    if "sensitivity" in data:
        label = data["sensitivity"]["parameter"]
        keys = [label, "h_vpp_re", "d_vpp_re", "energy_min_mwh",
                "energy_peak_mwh", "idle_reserve_ratio"]
        rows = [[r[k] for k in keys] for r in data["sensitivity"]["rows"]]
        write(out / "sensitivity.csv", csv_lines(keys, rows))
    return created

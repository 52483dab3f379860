"""Command-line entry point: ``ramanconv <command> [--config] [--out] [--threads] [--seed]``."""
from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import epr as epr_mod
from .config import ConfigError, load_config, model_params
from .experiment import (
    FitFailure,
    FitProblem,
    SweepSpec,
    dbm_to_watt,
    find_maxima,
    fit_parameters,
    local_slopes,
    operating_point,
    power_sweep_microwave,
    power_sweep_optical,
    raman_map,
    read_measured_curve,
    saturation_knee,
)
from .io import render_csv, write_artifact
from .spin_levels import (
    DegenerateOptimumError,
    FieldConfig,
    absorption_spectrum,
    bundled_g_tensors,
    level_diagram,
    load_g_tensors,
    optimal_angle,
    splitting_slope,
    transition_amplitudes,
)

COMMANDS = ("spectrum", "raman-map", "sweep-mu", "sweep-xi", "epr", "spin-levels", "fit", "efficiency")


def _g_tensors(cfg, command):
    spin = cfg["spin"]
    path = spin["g_tensor_path"]
    if path is None:
        raise ConfigError(f"spin.g_tensor_path is required for '{command}' "
                          "(use 'bundled' for the example Er:YSO dataset)")
    if path == "bundled":
        path = bundled_g_tensors()
    try:
        tensors = load_g_tensors(path)
    except OSError as err:
        raise ConfigError(f"cannot read g-tensor file: {err}") from None
    site = spin["site"]
    try:
        return tensors[(site, "ground")], tensors[(site, "excited")]
    except KeyError:
        raise ConfigError(f"g-tensor file has no ground/excited pair for site {site}") from None


def cmd_spin_levels(cfg, args):
    g, e = _g_tensors(cfg, "spin-levels")
    spin = cfg["spin"]
    diagram = level_diagram(g, e, FieldConfig(spin["field_T"], spin["angle_deg"]))
    table = transition_amplitudes(diagram)
    results = {"fg_GHz": diagram.fg / 1e9, "fe_GHz": diagram.fe / 1e9,
               "resonance_field_T": cfg["microwave"]["frequency_Hz"] / splitting_slope(g, spin["angle_deg"])}
    try:
        opt = optimal_angle(g, e)
        results["optimal_angle_deg"] = opt.angle
        results["optimal_overlap_23"] = opt.overlap
    except DegenerateOptimumError:
        results["optimal_angle_deg"] = "degenerate"
    rows = []
    for gi, ej, det, strength in table.lines():
        kind = "strong" if strength >= 0.5 else "weak"
        rows.append((gi, ej, det / 1e9, strength, kind))
    return ["ground_level", "excited_level", "detuning_GHz", "relative_strength", "line_class"], rows, results


def cmd_spectrum(cfg, args):
    g, e = _g_tensors(cfg, "spectrum")
    spin, sp = cfg["spin"], cfg["spectrum"]
    x = SweepSpec(sp["detuning_start_Hz"], sp["detuning_stop_Hz"], sp["detuning_steps"]).values()
    sigma = cfg["inhomogeneity"]["sigma_o_Hz"]
    alpha = cfg["medium"]["alpha31_per_m"]
    t0 = transition_amplitudes(level_diagram(g, e, FieldConfig(0.0, spin["angle_deg"])))
    t1 = transition_amplitudes(level_diagram(g, e, FieldConfig(spin["field_T"], spin["angle_deg"])))
    a0 = absorption_spectrum(t0, sigma, alpha, x)
    a1 = absorption_spectrum(t1, sigma, alpha, x)
    rows = [(xi / 1e9, p, q) for xi, p, q in zip(x, a0, a1)]
    return ["detuning_GHz", "alpha_zero_field_per_m", "alpha_per_m"], rows, {}


def cmd_raman_map(cfg, args):
    g, e = _g_tensors(cfg, "raman-map")
    rm = cfg["raman_map"]
    model = model_params(cfg)
    fields = SweepSpec(rm["field_start_T"], rm["field_stop_T"], rm["field_steps"]).values()
    dets = SweepSpec(rm["detuning_start_Hz"], rm["detuning_stop_Hz"], rm["detuning_steps"]).values()
    res = raman_map(model, g, e, cfg["spin"]["angle_deg"], fields, dets,
                    float(dbm_to_watt(rm["p_mu_input_dBm"])), rm["p_xi_detector_W"])
    maxima = find_maxima(res.power) if res.power.ndim == 2 and min(res.power.shape) > 0 else []
    results = {
        "resonance_field_T": res.resonance_field,
        "maxima": ";".join(f"{float(fields[i])!r}T@{float(dets[j]) / 1e9!r}GHz" for i, j in maxima) or "none",
    }
    rows = [(B, d / 1e9, res.power[i, k]) for i, B in enumerate(fields) for k, d in enumerate(dets)]
    return ["field_T", "detuning_GHz", "p_s_detector_W"], rows, results


def cmd_sweep_mu(cfg, args):
    sw = cfg["sweep_mu"]
    model = model_params(cfg)
    x = SweepSpec(sw["start_dBm"], sw["stop_dBm"], sw["steps"]).values()
    res = power_sweep_microwave(model, x, sw["p_xi_detector_W"])
    results = {}
    if len(x) > 2:
        knee = saturation_knee(x, res.p_s)
        results["knee_dBm"] = knee if knee is not None else "none"
        results["low_power_slope"] = float(local_slopes(x[:2] / 10, res.p_s[:2])[1][0])
    rows = [(float(xd), p.p_mu_cavity, p.omega_mu, p.p_s_detector, p.efficiency,
             p.population_difference) for xd, p in zip(x, res.points)]
    cols = ["p_mu_input_dBm", "p_mu_cavity_W", "omega_mu_rad_per_s", "p_s_detector_W",
            "efficiency", "population_difference"]
    return cols, rows, results


def cmd_sweep_xi(cfg, args):
    sw = cfg["sweep_xi"]
    model = model_params(cfg)
    x = SweepSpec(sw["start_W"], sw["stop_W"], sw["steps"], "log").values()
    res = power_sweep_optical(model, x, sw["p_mu_input_dBm"])
    rows = [(p.p_xi_detector, p.p_xi_sample, p.omega_xi, p.p_s_detector,
             p.population_difference, p.thermal_difference) for p in res.points]
    cols = ["p_xi_detector_W", "p_xi_sample_W", "omega_xi_rad_per_s", "p_s_detector_W",
            "population_difference", "thermal_population_difference"]
    return cols, rows, {}


def cmd_epr(cfg, args):
    ep, mw = cfg["epr"], cfg["microwave"]
    slope = ep["slope_Hz_per_T"]
    if slope is None:
        g, _ = _g_tensors(cfg, "epr")
        slope = splitting_slope(g, cfg["spin"]["angle_deg"])
    cavity = epr_mod.CavityParams(mw["frequency_Hz"], mw["linewidth_Hz"], mw["quality_factor"])
    sigma = cfg["inhomogeneity"]["sigma_mu_Hz"]
    hom = cfg["rates"]["gamma2d_per_s"] / (2 * math.pi)
    g_n = epr_mod.calibrate_coupling(ep["peak_shift_Hz"], sigma, hom)
    coupling = epr_mod.SpinEnsembleCoupling(g_n, sigma, slope, hom)
    fields = SweepSpec(ep["field_start_T"], ep["field_stop_T"], ep["field_steps"]).values()
    shifts, lock = epr_mod.lockin_trace(cavity, coupling, fields, ep["fm_depth_Hz"])
    results = {
        "collective_coupling_Hz": g_n,
        "cooperativity": epr_mod.cooperativity(g_n, cavity.kappa, coupling.spin_linewidth),
        "resonance_field_T": coupling.resonance_field(cavity),
    }
    rows = [(B, s, v) for B, s, v in zip(fields, shifts, lock)]
    return ["field_T", "shift_Hz", "lockin_au"], rows, results


def _fit_problem(cfg, model, rng):
    ft = cfg["fit"]
    free = tuple(ft["free"])
    sw_mu, sw_xi = cfg["sweep_mu"], cfg["sweep_xi"]
    synthetic = ft["mu_data_csv"] is None and ft["xi_data_csv"] is None
    truth = None
    if synthetic:
        x1 = np.array(ft["mu_points_dBm"], dtype=float)
        x2 = np.array(ft["xi_points_W"], dtype=float)
        y1 = power_sweep_microwave(model, x1, sw_mu["p_xi_detector_W"]).p_s if len(x1) else x1
        y2 = power_sweep_optical(model, x2, sw_xi["p_mu_input_dBm"]).p_s if len(x2) else x2
        y1 = y1 * (1 + ft["noise"] * rng.standard_normal(len(y1)))
        y2 = y2 * (1 + ft["noise"] * rng.standard_normal(len(y2)))
        base = FitProblem(model, (x1, y1), (x2, y2), sw_mu["p_xi_detector_W"],
                          sw_xi["p_mu_input_dBm"], free)
        truth = {p: base.value(p) for p in free}
        initial = {p: v * ft["initial_scale"] for p, v in truth.items()}
        return FitProblem(model, (x1, y1), (x2, y2), sw_mu["p_xi_detector_W"],
                          sw_xi["p_mu_input_dBm"], free, initial), truth
    curves = []
    for key, want in (("mu_data_csv", "dBm"), ("xi_data_csv", "W")):
        if ft[key] is None:
            curves.append(((), ()))
            continue
        x, y, unit = read_measured_curve(ft[key])
        if unit != want:
            raise ConfigError(f"fit.{key}: independent variable must be in {want}, got {unit}")
        curves.append((x, y))
    return FitProblem(model, curves[0], curves[1], sw_mu["p_xi_detector_W"],
                      sw_xi["p_mu_input_dBm"], free), truth


def cmd_fit(cfg, args):
    model = model_params(cfg)
    rng = np.random.default_rng(cfg["seed"])
    problem, truth = _fit_problem(cfg, model, rng)
    try:
        res = fit_parameters(problem, max_iter=cfg["fit"]["max_iter"])
        status = "converged"
    except FitFailure as err:
        res, status = err.best, "max_iter"
    errs = res.standard_errors()
    rows = []
    for p in res.parameters:
        v = res.values[p]
        se = v * errs[p] if p.startswith("gamma") else errs[p]
        rows.append((p, problem.value(p), v, se, truth[p] if truth else "nan"))
    results = {"status": status, "iterations": res.iterations, "cost": res.cost,
               "n_points": problem.n_points}
    if status != "converged":
        raise FitFailure(f"fit did not converge (best cost {res.cost:.4g})", res)
    return ["parameter", "initial", "fitted", "std_error", "truth"], rows, results


def cmd_efficiency(cfg, args):
    model = model_params(cfg)
    op_cfg = cfg["operating_point"]
    op = operating_point(model, float(dbm_to_watt(op_cfg["p_mu_input_dBm"])), op_cfg["p_xi_detector_W"])
    items = [
        ("p_mu_input_W", op.p_mu_input),
        ("p_mu_cavity_W", op.p_mu_cavity),
        ("p_xi_detector_W", op.p_xi_detector),
        ("p_xi_sample_W", op.p_xi_sample),
        ("omega_mu_rad_per_s", op.omega_mu),
        ("omega_xi_rad_per_s", op.omega_xi),
        ("coherence_I_abs_rad_per_s", abs(op.coherence)),
        ("p_s_sample_W", op.p_s_sample),
        ("p_s_detector_W", op.p_s_detector),
        ("efficiency", op.efficiency),
    ]
    for name, value in items:
        print(f"{name:28s} {value:.6e}")
    return ["quantity", "value"], items, {"efficiency": op.efficiency}


HANDLERS = {
    "spectrum": cmd_spectrum,
    "raman-map": cmd_raman_map,
    "sweep-mu": cmd_sweep_mu,
    "sweep-xi": cmd_sweep_xi,
    "epr": cmd_epr,
    "spin-levels": cmd_spin_levels,
    "fit": cmd_fit,
    "efficiency": cmd_efficiency,
}


def build_parser():
    p = argparse.ArgumentParser(prog="ramanconv", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML config, or a CSV artifact to re-run from its embedded config")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--threads", type=int, help="worker threads (overrides config)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    return p


def run_command(name: str, cfg: dict, out=None, timestamp=None) -> str:
    """Run one command on a validated config and return the CSV text."""
    cols, rows, results = HANDLERS[name](cfg, None)
    text = render_csv(name, cfg, cols, rows, results, timestamp)
    if out is not None:
        write_artifact(out, text)
    return text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg["threads"] = args.threads
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg["seed"] = args.seed
        text = run_command(args.command, cfg, args.out)
    except ConfigError as err:
        print(f"ramanconv {args.command}: configuration error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - report any module failure with context
        module = type(err).__module__.rsplit(".", 1)[-1]
        print(f"ramanconv {args.command}: {type(err).__name__} [{module}]: {err}", file=sys.stderr)
        return 1
    if args.out is None and args.command != "efficiency":
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())

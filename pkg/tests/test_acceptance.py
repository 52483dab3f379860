"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the lines
interleaved with pytest's own output; they are printed either way).
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from raman_upconv.cli import COMMANDS, main
from raman_upconv.config import load_config, model_params
from raman_upconv.epr import (
    CavityParams,
    SpinEnsembleCoupling,
    calibrate_coupling,
    cooperativity,
    dispersive_shift_spectrum,
)
from raman_upconv.experiment import (
    FitFailure,
    FitProblem,
    ModelParams,
    find_maxima,
    fit_parameters,
    local_slopes,
    operating_point,
    power_sweep_microwave,
    power_sweep_optical,
    raman_map,
    saturation_knee,
)
from raman_upconv.io import csv_body
from raman_upconv.lindblad import (
    AtomDrive,
    RelaxationRates,
    build_hamiltonian,
    build_liouvillian,
    check_density_matrix,
    evolve,
    steady_state,
    thermal_occupation,
)
from raman_upconv.propagation import (
    MediumParams,
    OpticalField,
    phase_matching_factor,
    power_to_rabi_optical,
    signal_amplitude,
    source_coefficient,
)
from raman_upconv.ensemble import polarization
from raman_upconv.spin_levels import bundled_g_tensors, line_positions, load_g_tensors, optimal_angle


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail, elapsed=None, limit=None):
        timing = ""
        if elapsed is not None:
            timing = f"; {elapsed:.3g} s" + (f" (limit {limit:g} s)" if limit is not None else "")
        with capsys.disabled():
            print(f"\nCRITERION {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}{timing}")
        return ok
    return emit


def timed(fn, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t


def test_criterion_01_thermal_occupation(report):
    nb = thermal_occupation(4.9e9, 4.2)
    reps = 1000
    _, t = timed(lambda: [thermal_occupation(4.9e9, 4.2) for _ in range(reps)])
    per_call = t / reps
    ok = abs(nb - 17.0) <= 0.1 and per_call < 1e-3
    assert report(1, "N_b(4.9 GHz, 4.2 K) = 17.0 +- 0.1", ok,
                  f"N_b = {nb:.4f}, {per_call * 1e6:.1f} us per call")


def test_criterion_02_steady_state_vs_integration(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(20):
        r = lambda: 10 ** rng.uniform(0, 2)  # noqa: E731
        rates = RelaxationRates(r(), r(), r(), r(), r(), n_bath=rng.uniform(0, 20))
        drive = AtomDrive(rng.uniform(-1, 1) * r(), rng.uniform(-1, 1) * r(), r(), r())
        L = build_liouvillian(build_hamiltonian(drive), rates)
        rho_ss = steady_state(L)
        # slowest relaxation rate of the generator sets the integration time
        slow = np.sort(np.abs(np.linalg.eigvals(L).real))[1]
        rho_t = evolve(np.diag([1.0, 0, 0]).astype(complex), L, 30 / slow)
        worst = max(worst, np.abs(rho_t - rho_ss).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10
    assert report(2, "steady state vs long-time integration, 20 sets", ok,
                  f"max |diff| = {worst:.2e} (tol 1e-6)", elapsed, 10)


def test_criterion_03_detailed_balance_and_psd(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_db, failures = 0.0, 0
    for nb in (0.0, 0.1, 1.0, 17.0, 100.0):
        rho = steady_state(build_liouvillian(np.zeros((3, 3)), RelaxationRates(n_bath=nb)))
        expected = np.diag([nb + 1, nb, 0.0]) / (2 * nb + 1)
        worst_db = max(worst_db, np.abs(rho - expected).max())
        for _ in range(20):
            r = lambda: 10 ** rng.uniform(0, 6)  # noqa: E731
            rates = RelaxationRates(r(), r(), r(), r(), r(), n_bath=nb)
            drive = AtomDrive(rng.uniform(-1, 1) * r(), rng.uniform(-1, 1) * r(), r(), r())
            try:
                check_density_matrix(steady_state(build_liouvillian(build_hamiltonian(drive), rates)))
            except ValueError:
                failures += 1
    elapsed = time.perf_counter() - t0
    ok = worst_db < 1e-10 and failures == 0 and elapsed < 1
    assert report(3, "detailed balance and PSD, N_b in {0, 0.1, 1, 17, 100}", ok,
                  f"max thermal-state error {worst_db:.1e}, {failures}/100 invalid states", elapsed, 1)


def test_criterion_04_phase_matching(report):
    k_mu = 2 * math.pi * 4.9e9 / 299792458.0
    f, t = timed(phase_matching_factor, 1.8, k_mu, 12e-3)
    ok = abs(f - 0.36) <= 0.01 and t < 1e-3
    assert report(4, "phase matching 0.36 +- 0.01", ok, f"factor = {f:.5f}", t, 1e-3)


def test_criterion_05_closed_form_vs_propagation(report):
    from scipy.integrate import solve_ivp

    med = MediumParams()
    t0 = time.perf_counter()
    I = operating_point(ModelParams(), 1e-3, 2e-3).coherence
    d23 = med.dipole_ratio * med.dipole13
    om = power_to_rabi_optical(1e-3, 0.5e-6, d23, med.refractive_index)
    closed = signal_amplitude(med, I, OpticalField.from_power(1e-3, 0.5e-6, med.refractive_index), om)
    avg = I / (math.sqrt(2 * math.pi) * med.sigma_o)
    kappa = source_coefficient(med)
    sol = solve_ivp(lambda z, y: [0.0, kappa * polarization(z, med, avg)], (0, med.length), [0.0, 0.0],
                    rtol=1e-10, atol=1e-30, max_step=med.length / 200)
    direct = complex(*sol.y[:, -1])
    elapsed = time.perf_counter() - t0
    rel = abs(abs(closed) - abs(direct)) / abs(direct)
    ok = med.optical_depth == pytest.approx(0.24) and rel <= 0.01 and elapsed < 5
    assert report(5, "closed form vs source integration at alpha L = 0.24", ok,
                  f"relative difference {rel:.2e} (tol 1e-2)", elapsed, 5)


def test_criterion_06_line_positions_and_angle(report):
    t0 = time.perf_counter()
    p = line_positions(5.0e9, 1.8e9)
    exact = p["strong"] == (-1.6e9, 1.6e9) and p["weak"] == (-3.4e9, 3.4e9)
    exact = exact or (np.allclose(p["strong"], (-1.6e9, 1.6e9), rtol=0, atol=1e-6)
                      and np.allclose(p["weak"], (-3.4e9, 3.4e9), rtol=0, atol=1e-6))
    path = bundled_g_tensors()
    if not Path(path).is_file():
        report(6, "line positions and optimal angle", exact, "g-tensor data absent, angle check SKIPPED")
        pytest.skip("bundled g-tensor dataset not available")
    t = load_g_tensors(path)
    angle = optimal_angle(t[(1, "ground")], t[(1, "excited")]).angle
    elapsed = time.perf_counter() - t0
    ok = exact and abs(angle - 29.0) <= 1.0 and elapsed < 10
    assert report(6, "line positions +-1.6/+-3.4 GHz and optimal angle 29 +- 1 deg", ok,
                  f"strong {p['strong']}, weak {p['weak']}, angle {angle:.2f} deg", elapsed, 10)


def test_criterion_07_power_scaling(report):
    cfg = load_config(None)
    model = model_params(cfg)
    assert (model.n_mu, model.n_o) == (31, 31)
    sm, sx = cfg["sweep_mu"], cfg["sweep_xi"]
    t0 = time.perf_counter()
    # both sweeps start in the bilinear regime, so the first slope is the asymptote
    p_mu = np.linspace(sm["start_dBm"], sm["stop_dBm"], sm["steps"])
    mu = power_sweep_microwave(model, p_mu, sm["p_xi_detector_W"])
    p_xi = np.geomspace(sx["start_W"], sx["stop_W"], sx["steps"])
    xi = power_sweep_optical(model, p_xi, sx["p_mu_input_dBm"])
    elapsed = time.perf_counter() - t0

    low_slope = local_slopes(p_mu[:2] / 10, mu.p_s[:2])[1][0]
    knee = saturation_knee(p_mu, mu.p_s)
    _, s_xi = local_slopes(np.log10(p_xi), xi.p_s)
    asymptote = s_xi[0]
    high = slice(len(p_xi) * 2 // 3, None)
    steeper = s_xi[len(s_xi) // 2:].max() > asymptote
    cooled = all(p.population_difference > p.thermal_difference for p in xi.points[high])
    ok = (abs(low_slope - 1) <= 0.05 and knee is not None and abs(knee - 20) <= 3
          and steeper and cooled and elapsed < 300)
    last = xi.points[-1]
    assert report(7, "power scaling (slope, knee, optical slope, spin cooling)", ok,
                  f"low slope {low_slope:.3f}, knee {knee if knee is None else round(knee, 2)} dBm, optical slope {asymptote:.3f} -> "
                  f"{s_xi.max():.3f}, rho11-rho22 {last.population_difference:.4f} vs thermal "
                  f"{last.thermal_difference:.4f}", elapsed, 300)


def test_criterion_08_efficiency(report):
    model = model_params(load_config(None))
    op, elapsed = timed(operating_point, model, 1e-3, 2e-3)
    ratio = op.efficiency / 1e-12
    ok = 1 / 30 <= ratio <= 30 and elapsed < 60
    assert report(8, "efficiency within x30 of 1e-12", ok, f"eta = {op.efficiency:.3e}", elapsed, 60)


def test_criterion_09_epr(report):
    t0 = time.perf_counter()
    cav = CavityParams()
    hom = 1.7e6 / (2 * math.pi)
    cp = SpinEnsembleCoupling(calibrate_coupling(260e3, 13e6, hom), 13e6, homogeneous_fwhm=hom)
    B = cp.resonance_field(cav) + np.linspace(-6e-3, 6e-3, 2401)
    s = dispersive_shift_spectrum(cav, cp, B)
    asym = np.abs(s + s[::-1]).max() / np.abs(s).max()
    peak = np.abs(s).max()
    C = cooperativity(cp.collective_coupling, cav.kappa, cp.spin_linewidth)
    elapsed = time.perf_counter() - t0
    ok = asym <= 1e-6 and abs(peak - 260e3) <= 1e-3 * 260e3 and 2e-2 <= C <= 2e-1 and elapsed < 10
    assert report(9, "EPR antisymmetry and cooperativity bracket", ok,
                  f"antisymmetry {asym:.1e}, peak {peak / 1e3:.1f} kHz, C = {C:.4f}", elapsed, 10)


def test_criterion_10_fit_round_trip(report):
    cfg = load_config(None)
    ft = cfg["fit"]
    truth = ModelParams(n_mu=21, n_o=21)
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    x1 = np.array(ft["mu_points_dBm"])
    x2 = np.array(ft["xi_points_W"])
    y1 = power_sweep_microwave(truth, x1, 1.8e-3).p_s * (1 + 0.01 * rng.standard_normal(len(x1)))
    y2 = power_sweep_optical(truth, x2, 0.0).p_s * (1 + 0.01 * rng.standard_normal(len(x2)))
    exact = {"gamma2d": 1.7e6, "gamma3d": 2.8e6, "gamma21": 27.4, "zeta_mu_dB": 13.1, "zeta_xi_inv_dB": -6.4}
    initial = {k: 2 * v for k, v in exact.items()}
    problem = FitProblem(truth, (x1, y1), (x2, y2), initial=initial)
    try:
        res = fit_parameters(problem, max_iter=ft["max_iter"])
        status = "converged"
    except FitFailure as err:
        res, status = err.best, "not converged"
    elapsed = time.perf_counter() - t0
    errors = {k: res.values[k] / v - 1 for k, v in exact.items()}
    ok = all(abs(e) <= 0.10 for e in errors.values()) and elapsed < 600
    detail = ", ".join(f"{k} {100 * e:+.1f}%" for k, e in errors.items())
    assert report(10, "fit round trip within 10%", ok, f"{status}; {detail}", elapsed, 600)


def test_criterion_11_raman_map(report):
    cfg = load_config(None)
    rm = cfg["raman_map"]
    t = load_g_tensors(bundled_g_tensors())
    fields = np.linspace(rm["field_start_T"], rm["field_stop_T"], 40)
    dets = np.linspace(rm["detuning_start_Hz"], rm["detuning_stop_Hz"], 40)
    res, elapsed = timed(raman_map, model_params(cfg), t[(1, "ground")], t[(1, "excited")],
                         cfg["spin"]["angle_deg"], fields, dets,
                         10 ** (rm["p_mu_input_dBm"] / 10) * 1e-3, rm["p_xi_detector_W"])
    maxima = find_maxima(res.power)
    half_b, half_d = (fields[1] - fields[0]) / 2, (dets[1] - dets[0]) / 2
    found = sorted((fields[i], dets[j]) for i, j in maxima)
    predicted = sorted(res.predicted_peaks, key=lambda p: p[1])
    matched = len(found) == 4 and all(
        any(abs(b - pb) <= half_b and abs(d - pd) <= half_d for b, d in found) for pb, pd in predicted)
    ok = matched and elapsed < 600
    where = "; ".join(f"{b:.4f} T @ {d / 1e9:+.3f} GHz" for b, d in found)
    assert report(11, "Raman map has four maxima at predicted positions", ok,
                  f"{len(found)} maxima [{where}]", elapsed, 600)


DETERMINISM_RUNS = {
    "spectrum": {},
    "raman-map": {"raman_map": {"field_steps": 5, "detuning_steps": 9}},
    "sweep-mu": {"sweep_mu": {"steps": 7}},
    "sweep-xi": {"sweep_xi": {"steps": 7}},
    "epr": {},
    "spin-levels": {},
    "fit": {"fit": {"free": ["zeta_mu_dB", "gamma3d"], "mu_points_dBm": [-20.0, 0.0, 20.0],
                    "xi_points_W": [1e-5, 1e-3], "max_iter": 30}},
    "efficiency": {},
}


def test_criterion_12_determinism(report, tmp_path):
    import yaml

    t0 = time.perf_counter()
    differing = []
    for command in COMMANDS:
        data = {"quadrature": {"n_mu": 11, "n_o": 11}, "spin": {"g_tensor_path": "bundled"},
                "seed": 5, **DETERMINISM_RUNS[command]}
        cfg = tmp_path / f"{command}.yaml"
        cfg.write_text(yaml.safe_dump(data))
        bodies = []
        for i, threads in enumerate(("1", "4", "1")):
            out = tmp_path / f"{command}-{i}.csv"
            if main([command, "--config", str(cfg), "--out", str(out), "--threads", threads]) != 0:
                differing.append(f"{command} (exit status)")
                break
            bodies.append(csv_body(out.read_text()))
        if len(bodies) == 3 and not bodies[0] == bodies[1] == bodies[2]:
            differing.append(command)
    elapsed = time.perf_counter() - t0
    ok = not differing
    assert report(12, "byte-identical CSV bodies across reruns and thread counts", ok,
                  f"{len(COMMANDS)} commands, differing: {differing or 'none'}", elapsed)

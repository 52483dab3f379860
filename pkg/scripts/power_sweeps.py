"""Signal power against microwave and coupling-laser power, with slopes and knee.

    python3 scripts/power_sweeps.py [--n 31] [--out-prefix sweep]
"""
import argparse

import numpy as np

from raman_upconv.config import load_config, model_params
from raman_upconv.experiment import (
    SweepSpec,
    local_slopes,
    power_sweep_microwave,
    power_sweep_optical,
    saturation_knee,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="YAML config (defaults otherwise)")
    ap.add_argument("--n", type=int, help="quadrature nodes per axis")
    ap.add_argument("--out-prefix", default="sweep")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.n:
        cfg["quadrature"].update(n_mu=args.n, n_o=args.n)
    model = model_params(cfg)
    sm, sx = cfg["sweep_mu"], cfg["sweep_xi"]

    p_mu = SweepSpec(sm["start_dBm"], sm["stop_dBm"], sm["steps"]).values()
    mu = power_sweep_microwave(model, p_mu, sm["p_xi_detector_W"])
    mid, s = local_slopes(p_mu / 10, mu.p_s)
    knee = saturation_knee(p_mu, mu.p_s)
    print(f"microwave sweep at P_xi = {sm['p_xi_detector_W']:g} W")
    print(f"  low-power slope {s[0]:.3f}, knee {knee if knee is None else round(knee, 2)} dBm")
    np.savetxt(f"{args.out_prefix}_mu.csv", np.column_stack([p_mu, mu.p_s]), delimiter=",",
               header="p_mu_input_dBm,p_s_detector_W", comments="")

    p_xi = SweepSpec(sx["start_W"], sx["stop_W"], sx["steps"], "log").values()
    xi = power_sweep_optical(model, p_xi, sx["p_mu_input_dBm"])
    mid, s = local_slopes(np.log10(p_xi), xi.p_s)
    k = int(np.argmax(s))
    pop = np.array([pt.population_difference for pt in xi.points])
    print(f"optical sweep at P_mu = {sx['p_mu_input_dBm']:g} dBm")
    print(f"  low-power slope {s[0]:.3f}, steepest {s[k]:.3f} near {10 ** mid[k]:.2e} W")
    print(f"  rho11-rho22 from {pop[0]:.4f} to {pop[-1]:.4f} (thermal {xi.points[0].thermal_difference:.4f})")
    np.savetxt(f"{args.out_prefix}_xi.csv", np.column_stack([p_xi, xi.p_s, pop]), delimiter=",",
               header="p_xi_detector_W,p_s_detector_W,population_difference", comments="")


if __name__ == "__main__":
    main()

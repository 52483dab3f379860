"""Synthetic round trip: simulate both power curves, add noise, refit five parameters.

    python3 scripts/fit_synthetic.py [--seed 0] [--n 21] [--noise 0.01] [--scale 2]
"""
import argparse
import time

import numpy as np

from raman_upconv.config import DEFAULTS
from raman_upconv.experiment import (
    FIT_PARAMETERS,
    FitFailure,
    FitProblem,
    ModelParams,
    fit_parameters,
    power_sweep_microwave,
    power_sweep_optical,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=21, help="quadrature nodes per axis")
    ap.add_argument("--noise", type=float, default=0.01, help="relative noise on P_S")
    ap.add_argument("--scale", type=float, default=2.0, help="initial guess = scale x truth")
    ap.add_argument("--max-iter", type=int, default=50)
    args = ap.parse_args()

    ft = DEFAULTS["fit"]
    truth = ModelParams(n_mu=args.n, n_o=args.n)
    rng = np.random.default_rng(args.seed)
    x1 = np.array(ft["mu_points_dBm"])
    x2 = np.array(ft["xi_points_W"])
    y1 = power_sweep_microwave(truth, x1, 1.8e-3).p_s * (1 + args.noise * rng.standard_normal(len(x1)))
    y2 = power_sweep_optical(truth, x2, 0.0).p_s * (1 + args.noise * rng.standard_normal(len(x2)))

    base = FitProblem(truth, (x1, y1), (x2, y2))
    exact = {p: base.value(p) for p in FIT_PARAMETERS}
    problem = FitProblem(truth, (x1, y1), (x2, y2), initial={p: args.scale * v for p, v in exact.items()})
    t0 = time.perf_counter()
    try:
        res = fit_parameters(problem, max_iter=args.max_iter)
    except FitFailure as err:
        print(err)
        res = err.best
    dt = time.perf_counter() - t0
    se = res.standard_errors()
    print(f"{res.iterations} iterations, cost {res.cost:.4g}, {dt:.0f} s")
    print(f"{'parameter':16s} {'truth':>12s} {'fitted':>12s} {'error':>8s} {'std err':>10s}")
    for p in FIT_PARAMETERS:
        v = res.values[p]
        rel = "log" if p.startswith("gamma") else "abs"
        print(f"{p:16s} {exact[p]:12.5g} {v:12.5g} {100 * (v / exact[p] - 1):+7.2f}% "
              f"{se[p]:9.3g} ({rel})")


if __name__ == "__main__":
    main()

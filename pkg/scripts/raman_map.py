"""Field/detuning map of the Raman heterodyne signal with the bundled g-tensors.

    python3 scripts/raman_map.py --out map.csv [--steps 40] [--n 31]
"""
import argparse
import io

import numpy as np

from raman_upconv.cli import run_command
from raman_upconv.config import validate_config
from raman_upconv.io import csv_body


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="raman_map.csv")
    ap.add_argument("--steps", type=int, default=40, help="grid points per axis")
    ap.add_argument("--n", type=int, default=31, help="quadrature nodes per axis")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    cfg = validate_config({
        "threads": args.threads,
        "quadrature": {"n_mu": args.n, "n_o": args.n},
        "spin": {"g_tensor_path": "bundled"},
        "raman_map": {"field_steps": args.steps, "detuning_steps": args.steps},
    })
    text = run_command("raman-map", cfg, args.out)
    for line in text.splitlines():
        if line.startswith("# result"):
            print(line[2:])

    data = np.loadtxt(io.StringIO(csv_body(text)), delimiter=",", skiprows=1)
    B, det, p = data.T
    k = np.argmax(p)
    print(f"strongest signal {p[k]:.3e} W at {B[k]:.4f} T, {det[k]:+.3f} GHz")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()

"""Compare closed-form, spectral, variational and Feynman-Kac values of F(alpha).

Usage: python3 scripts/free_energy_routes.py [config.ini] [--fk-t T --fk-n N --threads K]
"""
import argparse
from pathlib import Path

import numpy as np

from runtumble.config import load_config
from runtumble.spectral import feynman_kac_estimate, free_energy_spectral
from runtumble.verify import free_energy_table

ROOT = Path(__file__).resolve().parent.parent


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", nargs="?", default=ROOT / "configs" / "lattice_1d.ini")
    p.add_argument("--fk-alpha", type=float, nargs="*", default=[0.5, np.log(2)])
    p.add_argument("--fk-t", type=float, default=100.0)
    p.add_argument("--fk-n", type=int, default=20_000)
    p.add_argument("--threads", type=int, default=4)
    args = p.parse_args()

    cfg = load_config(args.config)
    model = cfg.model.build()
    table = free_energy_table(model, cfg.grids.alpha)
    print(f"{'alpha':>8} {'closed':>14} {'spectral':>14} {'variational':>14}")
    for i, a in enumerate(table.alphas[:, 0]):
        closed = "" if table.closed is None else f"{table.closed[i]:14.10f}"
        print(f"{a:8.3f} {closed:>14} {table.spectral[i]:14.10f} {table.variational[i]:14.10f}")
    print("max |discrepancy|:", {k: f"{v:.2e}" for k, v in table.max_discrepancy.items()})

    if hasattr(model, "kernel"):
        for a in args.fk_alpha:
            alpha = np.zeros(model.d)
            alpha[0] = a
            est = feynman_kac_estimate(model, alpha, args.fk_t, args.fk_n, seed=cfg.simulation.seed,
                                       threads=args.threads)
            print(f"Feynman-Kac alpha={a:.4f}: {est.estimate:.5f} +- {est.stderr:.5f}"
                  f" (spectral {free_energy_spectral(model, alpha):.5f})")


if __name__ == "__main__":
    main()

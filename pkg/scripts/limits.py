"""Fast-flipping and continuum limits of the free energy, with fitted convergence orders.

Usage: python3 scripts/limits.py
"""
from pathlib import Path

import numpy as np

from runtumble.config import load_config
from runtumble.free_energy import continuum_limit_check
from runtumble.spectral import slow_fast_limit

ROOT = Path(__file__).resolve().parent.parent


def main():
    gammas = np.logspace(0, 3, 7)
    for name in ("lattice_1d", "lattice_2d", "lattice_cyclic"):
        model = load_config(ROOT / "configs" / f"{name}.ini").model.build()
        alpha = np.zeros(model.d)
        alpha[0] = 0.5
        res = slow_fast_limit(model, alpha, gammas)
        print(f"{name}: limit {res.limit:.6f}, fitted order in 1/gamma {res.order:.3f}")
        for g, f, dev in zip(res.gammas, res.values, res.deviations):
            print(f"  gamma={g:9.2f}  F={f:.8f}  |F - limit|={dev:.3e}")

    model = load_config(ROOT / "configs" / "lattice_1d.ini").model.build()
    eps = [0.2, 0.1, 0.05, 0.025, 0.0125]
    for alpha in (0.5, 1.0, 2.0):
        c = continuum_limit_check(model, alpha, eps)
        print(f"continuum limit alpha={alpha}: target {c.target:.6f}, order in eps {c.order:.3f}")
        for e, r, dev in zip(c.epsilons, c.rescaled, c.deviations):
            print(f"  eps={e:7.4f}  rescaled={r:.8f}  deviation={dev:.3e}")


if __name__ == "__main__":
    main()

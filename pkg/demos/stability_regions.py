"""Empirical vs predicted convergence regions on a random quadratic.

Sweeps (eta, beta) for heavy-ball GD and the momentum proximal point method,
then draws a coarse ASCII map: '#' converged and predicted, '.' diverged and
predicted, 'x' where the run and the prediction disagree, '+' on cells whose
radius sits on the stability boundary (or a pole of the implicit step).

Run: python3 demos/stability_regions.py
"""
import numpy as np

from sppam.harness import RegionSweepConfig, grid_values, region_agreement, region_sweep

cfg = RegionSweepConfig(p=20, kappa=10, eta_range=(-5, 5, 0.5), beta_range=(-5, 5, 0.5), iters=100, seed=1)
etas, betas = grid_values(*cfg.eta_range), grid_values(*cfg.beta_range)

for algo in ("GDM", "PPAM"):
    cells = region_sweep(algo, cfg)
    grid = np.array(cells, dtype=object).reshape(etas.size, betas.size)
    print(f"\n{algo}: agreement {region_agreement(cells):.3f}  (rows beta from +5 down to -5, cols eta -5..5)")
    for j in reversed(range(betas.size)):
        row = ""
        for i in range(etas.size):
            c = grid[i, j]
            if c.theoretical.boundary:
                row += "+"
            elif c.empirical_converged != c.theoretical.predicate:
                row += "x"
            else:
                row += "#" if c.empirical_converged else "."
        print(f"  {betas[j]:+5.1f} {row}")

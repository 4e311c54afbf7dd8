"""Iterations to precision 0.01 vs step size on a small linear regression.

Prints the median iteration count per method, with '-' for runs that never
reached the target (all trials diverged or ran out of budget).

Run: python3 demos/glm_step_sizes.py   (about half a minute)
"""
from sppam.harness import GlmBenchConfig, glm_bench

cfg = GlmBenchConfig(p=30, n=30, kappa=5, mean_fn="identity", trials=3, max_iters=5000, seed=1)
res = glm_bench(cfg)

print("eta      " + "".join(f"{a:>8s}" for a in cfg.algos))
for eta in cfg.eta_list:
    cells = []
    for algo in cfg.algos:
        cells.append(f"{res.median_iters(algo, eta):8.0f}" if res.converged(algo, eta) else f"{'-':>8s}")
    print(f"{eta:<9g}" + "".join(cells))

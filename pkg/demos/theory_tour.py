"""A walk through the closed-form quantities, printed as a small report.

Run: python3 demos/theory_tour.py
"""
import numpy as np

from sppam import theory

BETA = 0.9

print("Stability of heavy-ball SGD on a single eigenvalue (beta = 0.9)")
lo, hi = theory.sgdm_rho_window(BETA)
print(f"  rho < 1 for eta*lam in ({lo:.3g}, {hi:.6f});  1 + 1/(1+2 beta) = {1 + 1 / (1 + 2 * BETA):.6f}")
for x in (0.001, 0.0028, 0.5, 1.26, 1.3, 1.4):
    print(f"  eta*lam = {x:<7g} rho = {theory.sgdm_rho(x, BETA, 1.0):.6f}")

print("\nDiscount threshold for SPPAM (mu = 1)")
for beta in (0.0, 0.5, 0.9):
    print(f"  beta = {beta}: tau < 1/2 once eta*mu > {theory.discount_threshold(beta):.4f}")

print("\nContraction of the SPPAM squared-error recursion (mu = 1, beta = 0.3)")
print("  eta     sigma1     SPPA 1/(1+2eta)  accelerated")
for eta in (0.5, 1, 2, 5, 10, 50):
    c = theory.sppam_contraction(eta, 0.3, 1.0)
    print(f"  {eta:<6g} {c.sigma1:.6f}   {theory.sppa_factor(eta, 1.0):.6f}        {theory.acceleration_condition(eta, 0.3, 1.0)}")

print("\nT-step bound vs T (eta = 10, beta = 0.3, sigma = 0.1, initial error 1)")
for T in (1, 10, 50, 100):
    print(f"  T = {T:<4d} bound = {theory.tstep_bound(10.0, 0.3, 1.0, 0.1, 1.0, T):.3e}")

print("\nDeterministic stability verdicts on spectrum {1, 10}")
lam = np.array([1.0, 10.0])
for eta, beta in [(0.1, 0.5), (0.3, 0.5), (-0.5, 0.5), (5.0, -0.9)]:
    v = theory.ppam_stable(eta, beta, lam)
    g = theory.gdm_stable(eta, beta, lam)
    print(f"  eta = {eta:<5g} beta = {beta:<5g} GDM {g.predicate!s:<5} (rho {g.spectral_radius:.3f})  PPAM {v.predicate!s:<5} (rho {v.spectral_radius:.3f})")

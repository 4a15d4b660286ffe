"""Stability constants for the certified toy system.

Verifies the certificate set by sampling, scans the minimal contracting
horizon across discount factors, and prints the constants at one
operating point.

    python3 demos/theory_constants.py
"""

from adaptmhe.analysis import compute_constants, min_horizon
from adaptmhe.certificates import check_ioss, check_ubebs
from adaptmhe.systems import toy_certificates, toy_model


def main():
    model = toy_model()
    certs = toy_certificates()

    print("certificate verification (sampled):")
    for name, res in (("parameter-bound", check_ubebs(certs.ubebs, model, rng_seed=0)),
                      ("detectability", check_ioss(certs.ioss, model, rng_seed=0))):
        print(f"  {name:15s} ok={res.ok}  worst margin={res.worst_margin:.3e}")

    print("\nminimal contracting horizon vs discount eta:")
    for eta in (0.35, 0.4, 0.5, 0.7, 0.9):
        print(f"  eta={eta:.2f}  N_min={min_horizon(certs, eta)}")

    eta, N = 0.5, 14
    tc = compute_constants(certs, eta, N)
    print(f"\nconstants at eta={eta}, N={N}:")
    for key in ("eta_w", "eta_o", "rho", "c", "mu", "C1", "C2", "q3_scale"):
        print(f"  {key:9s} = {getattr(tc, key):.6g}")
    print(f"  contraction_ok = {tc.contraction_ok}"
          f"  (max(mu, rho) = {max(tc.mu, tc.rho):.4f} < 1)")
    below = compute_constants(certs, eta, N - 1)
    print(f"  at N={N-1}: max(mu, rho) = {max(below.mu, below.rho):.4f} (no contraction)")


if __name__ == "__main__":
    main()

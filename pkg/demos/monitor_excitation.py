"""Observability monitoring on a short Chua run.

Drives the estimator for a few hundred steps and prints how the
excitation level alpha_t (the minimum eigenvalue of the discounted
parameter-sensitivity Gramian) rises and falls with the state amplitude,
gating when the parameter prior may trust the estimate.

    python3 demos/monitor_excitation.py [--steps 400]
"""

import argparse

import numpy as np

from adaptmhe.harness import generate_disturbances, preset
from adaptmhe.mhe import MovingHorizonEstimator
from adaptmhe.model import simulate_truth
from adaptmhe.systems import MODELS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=400)
    args = ap.parse_args()

    cfg = preset("chua-desk")
    cfg.t_sim = args.steps
    model = MODELS[cfg.model_name]()
    w_seq = generate_disturbances(cfg.disturbances, cfg.t_sim, cfg.seed)
    truth = simulate_truth(model, cfg.x0, cfg.z0, np.zeros((cfg.t_sim, 0)), w_seq)
    est = MovingHorizonEstimator(model, cfg.mhe, cfg.x0_prior, cfg.z0_prior,
                                 monitor_cfg=cfg.monitor)

    print(f"threshold alpha = {cfg.monitor.alpha:g}; window N = {cfg.mhe.N}")
    print(f"{'t':>5} {'|x1|':>8} {'alpha_t':>12} {'obs':>4} {'|e_z|':>8}")
    for t in range(1, cfg.t_sim + 1):
        rec = est.update(truth.u[t - 1], truth.y[t - 1])
        if t % 20 == 0:
            e_z = abs(rec.z_hat[0] - truth.z[t, 0])
            print(f"{t:>5} {abs(truth.x[t, 0]):>8.3f} {rec.alpha_t:>12.4e}"
                  f" {'yes' if rec.observable else 'no':>4} {e_z:>8.4f}")

    print("\nalpha_t tracks |x1|^3 sensitivity: large swings excite the")
    print("parameter direction; near the origin the window carries no")
    print("parameter information and the estimate is frozen instead.")


if __name__ == "__main__":
    main()

"""Chua-circuit benchmark: joint state and drifting-parameter estimation.

Runs the desk-scale preset (or a shorter horizon with --steps), compares
the observability-adaptive estimator against the always-trust-prior
baseline, and writes the run record plus plot data/scripts.

    python3 demos/chua_tracking.py --out out/chua [--steps 400]
"""

import argparse

from adaptmhe.harness import compare_runs, emit_plots, preset, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/chua")
    ap.add_argument("--steps", type=int, default=None,
                    help="override the preset's simulation length")
    ap.add_argument("--preset", default="chua-desk",
                    choices=["chua-desk", "chua-paper"])
    args = ap.parse_args()

    cfg = preset(args.preset)
    if args.steps is not None:
        cfg.t_sim = args.steps
    print(f"running {cfg.label}: N={cfg.mhe.N}, t_sim={cfg.t_sim}, seed={cfg.seed}")
    record = run_experiment(cfg)
    if record.aborted_at is not None:
        print(f"solver failure at step {record.aborted_at}; partial record kept")

    import os
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "record.csv")
    record.save(csv_path)
    written = emit_plots(record, args.out)
    print(f"wrote {csv_path} and {len(written)} plot files")

    summary = compare_runs(record)
    print(f"\nobservable steps:   {summary['n_observable']}"
          f" / unobservable: {summary['n_unobservable']}")
    print("parameter error |z_hat - z| (mean):")
    for phase in ("observable", "unobservable"):
        prop = summary[f"{phase}_mean_ez_proposed"]
        base = summary[f"{phase}_mean_ez_baseline"]
        print(f"  {phase:13s} proposed {prop:.4f}   baseline {base:.4f}")
    print("\nDuring unobservable phases the adaptive estimator freezes the")
    print("parameter instead of chasing noise, which is where the gap opens.")


if __name__ == "__main__":
    main()

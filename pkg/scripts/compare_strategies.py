"""Compare the adaptive solver with its pruning variants and the classical FSP baselines."""

import argparse
import csv
import time
from dataclasses import replace
from pathlib import Path

from cmefsp import BUILTINS, solve_adaptive, solve_standard_fsp, solve_time_stepping_fsp

STRATEGIES = ("quantile", "prune_to_mass", "fixed_threshold", "none")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="michaelis_menten", choices=sorted(BUILTINS))
    ap.add_argument("--out", type=Path, default=Path("results/strategies"))
    ap.add_argument("--theta", type=float, default=1e-9, help="cutoff for fixed_threshold")
    ap.add_argument("--baselines", action="store_true", help="also run standard and time-stepping FSP")
    args = ap.parse_args()

    model = BUILTINS[args.model]()
    base = model.config
    rows = []
    for strategy in STRATEGIES:
        cfg = replace(base, strategy=strategy, theta=args.theta, override_budget=True)
        res = solve_adaptive(model.network, model.x0, cfg)
        peak = max(r.n_states_before for r in res.steps)
        rows.append([strategy, peak, len(res.space), f"{res.cum_bound:.3e}", f"{res.wall_time:.3f}"])
    if args.baselines:
        start = time.perf_counter()
        res = solve_standard_fsp(model.network, model.x0, base.tf, base.eps_global, base.depth)
        rows.append(["standard_fsp", len(res.space), len(res.space), f"{res.leaked_mass:.3e}",
                     f"{time.perf_counter() - start:.3f}"])
        res = solve_time_stepping_fsp(model.network, model.x0, base, base.eps_global)
        peak = max(r.n_states_before for r in res.steps)
        rows.append(["time_stepping_fsp", peak, len(res.space), f"{res.leaked_mass:.3e}", f"{res.wall_time:.3f}"])

    header = ["method", "peak_states", "final_states", "error_bound", "wall_s"]
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.model}.tsv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t")
        w.writerow(header)
        w.writerows(rows)
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    for r in [header] + rows:
        print("  ".join(str(c).ljust(n) for c, n in zip(r, widths)))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Check simulator calibration: per-class zero proportions against the
full-scale reference bands, plus mean counts for a class-ordering sanity
check.

For each scenario and class the script reports the observed zero
proportion (fraction of zero entries in that class's block of the count
table) per replicate and how many replicates fall inside the reference
band (mean +/- 2 SD measured at full scale). The null scenario is scored
on generation labels, since its observed labels are permuted.
"""

import argparse
import sys

import numpy as np

from dcmd.simulate import generate_scenario, preset

# Full-scale reference (mean, sd) of the per-class zero proportion.
REFERENCE_ZP = {
    1: ((0.30, 0.13), (0.23, 0.11), (0.17, 0.10)),
    2: ((0.37, 0.14), (0.23, 0.11), (0.15, 0.09)),
    3: ((0.70, 0.12), (0.61, 0.13), (0.53, 0.14)),
    4: ((0.87, 0.06), (0.67, 0.11), (0.50, 0.14)),
    5: ((0.92, 0.04), (0.84, 0.07), (0.72, 0.10)),
    6: ((0.37, 0.14), (0.23, 0.11), (0.15, 0.09)),
}


def class_zero_proportions(dataset) -> np.ndarray:
    counts = np.asarray(dataset.table.counts, dtype=float)
    labels = np.asarray(dataset.gen_labels)
    out = []
    for cls in sorted(set(labels.tolist())):
        block = counts[labels == cls]
        out.append(float(np.mean(block == 0)))
    return np.asarray(out)


def class_mean_counts(dataset) -> np.ndarray:
    counts = np.asarray(dataset.table.counts, dtype=float)
    labels = np.asarray(dataset.gen_labels)
    return np.asarray(
        [float(counts[labels == cls].mean()) for cls in sorted(set(labels.tolist()))]
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--class-size", type=int, default=100)
    ap.add_argument("--otus", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    all_ok = True
    for scenario in range(1, 7):
        zp = np.empty((args.replicates, 3))
        means = np.empty((args.replicates, 3))
        for r in range(args.replicates):
            config = preset(scenario, class_size=args.class_size,
                            n_otus=args.otus, seed=args.seed + 1000 * r)
            data = generate_scenario(config)
            zp[r] = class_zero_proportions(data)
            means[r] = class_mean_counts(data)

        print(f"scenario {scenario}")
        for cls in range(3):
            ref_mean, ref_sd = REFERENCE_ZP[scenario][cls]
            lo, hi = ref_mean - 2 * ref_sd, ref_mean + 2 * ref_sd
            inside = int(np.sum((zp[:, cls] >= lo) & (zp[:, cls] <= hi)))
            flag = "ok" if inside >= int(0.9 * args.replicates) else "OUT"
            all_ok &= flag == "ok"
            print(f"  class {cls + 1}: ZP {zp[:, cls].mean():.3f} "
                  f"(sd {zp[:, cls].std(ddof=1):.3f})  band [{lo:.2f}, {hi:.2f}]  "
                  f"inside {inside}/{args.replicates}  {flag}")
        ordered = np.all(np.diff(means.mean(axis=0)) > 0)
        print(f"  mean counts by class: "
              + "  ".join(f"{m:.2f}" for m in means.mean(axis=0))
              + ("  (increasing)" if ordered else "  (NOT increasing)"))
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())

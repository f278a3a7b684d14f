"""Print WER and P_UE trends over the default grid (13 workloads x 4 devices x 12 points)."""
import argparse

import numpy as np

from dram_oracle.pipeline import default_characterization, mean_by
from dram_oracle.workloads import DEFAULT_DEVICES, default_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-exp", type=int, default=10)
    args = ap.parse_args()
    res = default_characterization(args.n_exp, args.seed)
    wer = res.wer

    print("mean WER by refresh period")
    for t, m in mean_by(wer, "t_refp").items():
        print(f"  {t:6.3f} s  {m:.3e}")
    print("mean WER by temperature")
    for c, m in mean_by(wer, "temp").items():
        print(f"  {c:5.1f} C  {m:.3e}")

    print("cross-workload spread (max/min mean WER) per operating point")
    for e in default_grid():
        sel = (wer.column("t_refp") == e.t_refp) & (wer.column("temp") == e.temp)
        per_w = np.array([wer.targets[sel & (wer.workloads == w)].mean() for w in dict.fromkeys(wer.workloads)])
        spread = per_w.max() / per_w.min() if per_w.min() > 0 else float("inf")
        print(f"  {e.t_refp:6.3f} s {e.temp:5.1f} C  max {per_w.max():.3e}  spread {spread:.2f}x")

    sel = (wer.column("t_refp") == 2.283) & (wer.column("temp") == 70.0)
    print("per-device mean WER at 2.283 s / 70 C")
    for d in DEFAULT_DEVICES:
        print(f"  {d.name:<12} {wer.targets[sel & (wer.devices == d.name)].mean():.3e}")

    print("system P_UE by operating point (mean over workloads)")
    for e in default_grid():
        ps = [p for _, env, p in res.system.rows if env == e]
        print(f"  {e.t_refp:6.3f} s {e.temp:5.1f} C  {np.mean(ps):.2f}")


if __name__ == "__main__":
    main()

"""Leave-one-workload-out comparison of every model and feature set on the default grid."""
import argparse
import sys

from dram_oracle.evaluation import comparison_csv, knn_sweep, loo_by_workload
from dram_oracle.models import ModelConfig
from dram_oracle.pipeline import default_characterization


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--target", choices=["wer", "p_ue"], default="wer")
    ap.add_argument("--out", help="CSV path (default stdout)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    res = default_characterization(seed=args.seed)
    ds = res.wer if args.target == "wer" else res.p_ue
    reports = []
    for fs in (1, 2, 3):
        best, _ = knn_sweep(ds, fs)
        reports.append(best)
        for kind in ("rdf", "svr"):
            reports.append(loo_by_workload(ds, ModelConfig(kind=kind, seed=args.seed), fs, latency_queries=100))
    reports.append(loo_by_workload(ds, ModelConfig(kind="baseline"), 1, latency_queries=100))
    text = comparison_csv(reports)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for r in reports:
        print(f"{r.label:<28} {r.overall_mpe:8.2f}%", file=sys.stderr)


if __name__ == "__main__":
    main()

"""Rank program features by |Spearman r| against WER and P_UE on the default grid."""
import argparse

from dram_oracle.features import ConstantTargetError, rank_features
from dram_oracle.pipeline import default_characterization


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--top", type=int, default=10)
    args = ap.parse_args()
    res = default_characterization(seed=args.seed)
    for name, ds in (("WER", res.wer), ("P_UE", res.p_ue)):
        print(f"{name}:")
        try:
            ranked = rank_features(ds)
        except ConstantTargetError as exc:
            print(f"  {exc}")
            continue
        for feat, r in ranked[: args.top]:
            print(f"  {feat:<28} {r:+.4f}")


if __name__ == "__main__":
    main()

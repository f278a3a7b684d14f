"""Default synthetic benchmark suite, devices and characterization grid.

Workloads come in families named after the programs they imitate. Members
of a family (e.g. ``srad`` and ``srad_par``) share seed, data image and
access sequence and differ in speed (CPI), so they touch the same words in
the same order at different rates.
"""
from __future__ import annotations

from dataclasses import dataclass

from .dramsim import EnvPoint, SimConfig, build_dimm, quantile_matched_shift, DimmProfile
from .trace import WorkloadSpec

FOOTPRINT_WORDS = 1 << 18
N_INSTRUCTIONS = 12_000_000_000

GRID_T_REFP = (0.618, 1.173, 1.727, 2.283)
GRID_TEMP = (50.0, 60.0, 70.0)
GRID_VDD = 1.428


@dataclass(frozen=True)
class DeviceSpec:
    """A DIMM/rank: ``wer_scale`` is its WER relative to the weakest device at the reference point."""

    name: str
    seed: int
    wer_scale: float = 1.0

    def build(self, config: SimConfig) -> DimmProfile:
        shift = quantile_matched_shift(config, self.wer_scale)
        return build_dimm(config, self.seed, self.name, shift=shift)

    def to_text(self) -> str:
        return f"{self.name}:{self.seed}:{self.wer_scale!r}"

    @classmethod
    def parse(cls, text: str) -> "DeviceSpec":
        parts = text.strip().split(":")
        if len(parts) not in (2, 3) or not parts[0]:
            raise ValueError(f"device: expected name:seed[:wer_scale], got {text!r}")
        scale = float(parts[2]) if len(parts) == 3 else 1.0
        return cls(parts[0], int(parts[1], 0), scale)


DEFAULT_DEVICES = (
    DeviceSpec("dimm0_rank0", 101, 1.0),
    DeviceSpec("dimm0_rank1", 102, 1.0 / 6.0),
    DeviceSpec("dimm1_rank0", 103, 1.0 / 30.0),
    DeviceSpec("dimm1_rank1", 104, 1.0 / 188.0),
)


def _family(
    names: tuple[str, ...],
    cpis: tuple[float, ...],
    accesses_per_word: float,
    seed: int,
    **kw,
) -> list[WorkloadSpec]:
    n = int(accesses_per_word * FOOTPRINT_WORDS)
    out = []
    for name, cpi in zip(names, cpis):
        threads = 1 if name == names[0] else 4
        out.append(
            WorkloadSpec(
                name=name,
                n_instructions=N_INSTRUCTIONS,
                footprint_words=FOOTPRINT_WORDS,
                target_access_rate=n / (N_INSTRUCTIONS * cpi),
                cpi=cpi,
                seed=seed,
                threads=threads,
                **kw,
            )
        )
    return out


def default_workloads() -> list[WorkloadSpec]:
    specs: list[WorkloadSpec] = []
    specs += _family(("backprop", "backprop_par"), (1.0, 0.93), 1.0, 11,
                     reuse_profile="streaming", value_alphabet_size=4096, write_fraction=0.5)
    specs += _family(("nw", "nw_par"), (1.0, 0.93), 2.0, 12,
                     reuse_profile="zipfian", zipf_s=1.0, value_alphabet_size=16)
    specs += _family(("srad", "srad_par"), (1.0, 0.93), 3.0, 13,
                     reuse_profile="uniform", value_alphabet_size=65536)
    specs += _family(("fmm", "fmm_par"), (1.0, 0.93), 4.0, 14,
                     reuse_profile="zipfian", zipf_s=0.8, value_alphabet_size=256)
    specs += _family(("kmeans", "kmeans_par"), (1.0, 0.93), 4.0, 15,
                     reuse_profile="uniform", value_alphabet_size=64)
    specs += _family(("pagerank", "bfs"), (1.0, 0.93), 2.0, 16,
                     reuse_profile="streaming", value_alphabet_size=1024)
    specs += _family(("memcached",), (1.0,), 10.0, 17,
                     reuse_profile="zipfian", zipf_s=0.7, value_alphabet_size=2)
    return specs


def default_grid(
    t_refps=GRID_T_REFP, temps=GRID_TEMP, v_dd: float = GRID_VDD
) -> list[EnvPoint]:
    return [EnvPoint(t, v_dd, temp) for temp in temps for t in t_refps]

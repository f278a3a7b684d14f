"""Profiling plus characterization: traces x devices x operating points -> labeled datasets."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .dramsim import EnvPoint, SimConfig, characterize, system_pue, trace_activity
from .features import ProgramFeatures, program_features
from .trace import MemoryTrace, generate_trace
from .workloads import DEFAULT_DEVICES, DeviceSpec, default_grid, default_workloads


@dataclass(frozen=True)
class Profile:
    features: ProgramFeatures
    activity: object


def profile_trace(trace: MemoryTrace, config: SimConfig) -> Profile:
    pf = program_features(trace, config.clock_hz, config.stall_cycles, config.words_per_row)
    return Profile(pf, trace_activity(trace, config))


@dataclass(frozen=True)
class SystemPue:
    """P_UE of the whole machine (all devices at once) per workload and env."""

    rows: tuple[tuple[str, EnvPoint, float], ...]

    def value(self, workload: str, env: EnvPoint) -> float:
        for w, e, p in self.rows:
            if w == workload and e == env:
                return p
        raise KeyError((workload, env))

    def write_csv(self, sink) -> None:
        owned = isinstance(sink, (str, os.PathLike))
        fh = open(sink, "w", newline="") if owned else sink
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["workload", "temp", "t_refp", "v_dd", "system_p_ue"])
            for name, e, p in self.rows:
                w.writerow([name, repr(e.temp), repr(e.t_refp), repr(e.v_dd), repr(p)])
        finally:
            if owned:
                fh.close()


@dataclass(frozen=True)
class Characterized:
    wer: Dataset
    p_ue: Dataset
    system: SystemPue


def characterize_profiles(
    profiles: Sequence[Profile],
    devices: Sequence[DeviceSpec],
    envs: Sequence[EnvPoint],
    n_exp: int = 10,
    seed: int = 0,
    config: SimConfig | None = None,
) -> Characterized:
    """Label every (workload, device, env) cell. Row order: workload, device, env.

    Run ``r`` of every device shares a run seed, so the system-level P_UE
    treats the devices as one machine running the workload ``n_exp`` times.
    """
    config = config or SimConfig()
    dimms = [d.build(config) for d in devices]
    wer_rows, pue_rows, sys_rows = [], [], []
    for prof in profiles:
        per_dev = [characterize(prof.activity, dimm, envs, n_exp, seed, config) for dimm in dimms]
        for dev, chars in zip(devices, per_dev):
            for env, ch in zip(envs, chars):
                fv = prof.features.at(env.t_refp, env.v_dd, env.temp, dev.name)
                wer_rows.append((fv, ch.wer))
                pue_rows.append((fv, ch.p_ue))
        for i, env in enumerate(envs):
            p = system_pue([chars[i].outcomes for chars in per_dev])
            sys_rows.append((prof.features.workload, env, p))
    return Characterized(Dataset(wer_rows, "wer"), Dataset(pue_rows, "p_ue"), SystemPue(tuple(sys_rows)))


def build_datasets(
    traces: Sequence[MemoryTrace],
    devices: Sequence[DeviceSpec],
    envs: Sequence[EnvPoint],
    n_exp: int = 10,
    seed: int = 0,
    config: SimConfig | None = None,
) -> Characterized:
    config = config or SimConfig()
    config.validate()
    profiles = [profile_trace(t, config) for t in traces]
    return characterize_profiles(profiles, devices, envs, n_exp, seed, config)


def mean_by(dataset: Dataset, key: str) -> dict[float, float]:
    """Mean target grouped by a numeric column."""
    col = dataset.column(key)
    return {float(v): float(dataset.targets[col == v].mean()) for v in np.unique(col)}


def default_characterization(n_exp: int = 10, seed: int = 0, config: SimConfig | None = None) -> Characterized:
    """The 13-workload x 4-device x 12-point default grid."""
    config = config or SimConfig()
    traces = [generate_trace(spec, config.capacity_words, config.words_per_row) for spec in default_workloads()]
    return build_datasets(traces, DEFAULT_DEVICES, default_grid(), n_exp, seed, config)

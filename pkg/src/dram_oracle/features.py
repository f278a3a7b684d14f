"""Program-inherent features of a trace and Spearman-based feature ranking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .trace import AccessKind, MemoryTrace, reuse_gaps

DEFAULT_CLOCK_HZ = 2.4e9
DEFAULT_STALL_CYCLES = 100.0
MAX_T_REFP = 2.283
# encoded value of a never-reused trace; reuse beyond T_REFP has no effect
NEVER_REUSED_SECONDS = 10 * MAX_T_REFP

CORE_FEATURES = ("t_reuse", "h_dp", "mem_accesses_per_cycle", "wait_cycles_ratio")
ENV_COLUMNS = ("temp", "t_refp", "v_dd")

FEATURE_SETS = {
    1: ("temp", "t_refp", "wait_cycles_ratio", "mem_accesses_per_cycle", "h_dp", "t_reuse"),
    2: ("temp", "t_refp", "wait_cycles_ratio", "mem_accesses_per_cycle"),
    # Set 3 = temp, t_refp and every program feature; resolved against a schema
    3: None,
}


class FeatureError(ValueError):
    pass


class MissingColumnError(FeatureError):
    pass


def select_features(feature_set: int, schema: Sequence[str]) -> tuple[str, ...]:
    """Column subset for a feature set, validated against ``schema``.

    Set 3 is ``temp``, ``t_refp`` and every program column of the schema.
    """
    if feature_set not in FEATURE_SETS:
        raise FeatureError(f"feature_set: expected one of {sorted(FEATURE_SETS)}, got {feature_set!r}")
    schema = tuple(schema)
    cols = FEATURE_SETS[feature_set]
    if cols is None:
        missing = [c for c in CORE_FEATURES if c not in schema]
        cols = ("temp", "t_refp") + CORE_FEATURES + tuple(
            c for c in schema if c not in ENV_COLUMNS and c not in CORE_FEATURES
        )
    else:
        missing = [c for c in cols if c not in schema]
    if missing:
        raise MissingColumnError(f"schema lacks column(s): {', '.join(missing)}")
    return cols


class NoWritesError(FeatureError):
    """Data-pattern entropy is undefined for a trace without writes."""


class ZeroCyclesError(FeatureError):
    pass


class LengthMismatchError(FeatureError):
    pass


class ZeroRankVarianceError(FeatureError):
    """One of the sequences is constant, so its rank correlation is undefined."""


class ConstantTargetError(FeatureError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    workload: str
    t_reuse: float
    h_dp: float
    mem_accesses_per_cycle: float
    wait_cycles_ratio: float
    t_refp: float
    v_dd: float
    temp: float
    device: str
    nuisance: tuple[tuple[str, float], ...] = field(default=())

    def as_dict(self) -> dict[str, float]:
        """Numeric columns by name (workload/device identifiers excluded)."""
        d = {
            "temp": self.temp,
            "t_refp": self.t_refp,
            "v_dd": self.v_dd,
            "t_reuse": self.t_reuse,
            "h_dp": self.h_dp,
            "mem_accesses_per_cycle": self.mem_accesses_per_cycle,
            "wait_cycles_ratio": self.wait_cycles_ratio,
        }
        d.update(self.nuisance)
        return d

    @property
    def program_feature_names(self) -> tuple[str, ...]:
        return CORE_FEATURES + tuple(n for n, _ in self.nuisance)


def reuse_time(trace: MemoryTrace, clock_hz: float = DEFAULT_CLOCK_HZ) -> float:
    """Mean DRAM reuse time in seconds over accesses with a prior reference.

    Each access contributes ``CPI x (instructions since the last access to
    the same 64-bit word) / f_clk``. Returns ``math.inf`` (never reused) when
    no word is touched twice.
    """
    _, gaps = reuse_gaps(trace)
    if len(gaps) == 0:
        return math.inf
    return int(gaps.sum()) / len(gaps) * trace.spec.cpi / clock_hz


def encode_reuse(t_reuse: float) -> float:
    return min(t_reuse, NEVER_REUSED_SECONDS)


def data_entropy(trace: MemoryTrace) -> float:
    writes = trace.value[trace.kind == AccessKind.WRITE]
    if len(writes) == 0:
        raise NoWritesError("trace has no writes; data-pattern entropy is undefined")
    _, counts = np.unique(writes, return_counts=True)
    p = counts / len(writes)
    h = float(-(p * np.log2(p)).sum())
    return max(h, 0.0)


def access_rate(trace: MemoryTrace) -> float:
    if trace.total_cycles <= 0:
        raise ZeroCyclesError("total_cycles is zero; access rate undefined")
    return len(trace) / trace.total_cycles


def wait_cycles_ratio(trace: MemoryTrace, stall_cycles: float = DEFAULT_STALL_CYCLES) -> float:
    """Fraction of cycles stalled on memory under a fixed per-access stall cost."""
    if len(trace) == 0:
        return 0.0
    if trace.total_cycles <= 0:
        raise ZeroCyclesError("total_cycles is zero; wait-cycle ratio undefined")
    return min(1.0, len(trace) * stall_cycles / trace.total_cycles)


def _moments(x: np.ndarray) -> tuple[float, float, float, float]:
    """mean, coefficient of variation, skewness, excess kurtosis."""
    if len(x) == 0:
        return 0.0, 0.0, 0.0, 0.0
    m = float(x.mean())
    sd = float(x.std())
    if sd == 0.0 or m == 0.0:
        return m, 0.0, 0.0, 0.0
    z = (x - m) / sd
    return m, sd / m, float((z**3).mean()), float((z**4).mean() - 3.0)


def nuisance_features(
    trace: MemoryTrace,
    clock_hz: float = DEFAULT_CLOCK_HZ,
    words_per_row: int = 1024,
) -> tuple[tuple[str, float], ...]:
    """Auxiliary trace statistics standing in for hardware counters."""
    n = len(trace)
    spec = trace.spec
    seconds = spec.total_cycles / clock_hz if spec.total_cycles else 0.0
    n_writes = int(np.count_nonzero(trace.kind))
    words = trace.word_index
    if n:
        _, per_word = np.unique(words, return_counts=True)
        _, per_row = np.unique(words // words_per_row, return_counts=True)
    else:
        per_word = per_row = np.zeros(0)
    apw_mean, apw_cv, _, _ = _moments(per_word.astype(float))
    row_rate = per_row / seconds if seconds else per_row.astype(float)
    rr_mean, rr_cv, rr_skew, rr_kurt = _moments(row_rate.astype(float))
    if n:
        top = max(1, len(per_word) // 100)
        hot_share = float(np.sort(per_word)[-top:].sum() / n)
    else:
        hot_share = 0.0

    _, gaps = reuse_gaps(trace)
    gap_s = gaps * spec.cpi / clock_hz
    if len(gap_s):
        g_med = float(np.median(gap_s))
        g_p90 = float(np.quantile(gap_s, 0.9))
        g_cv = float(gap_s.std() / gap_s.mean()) if gap_s.mean() > 0 else 0.0
    else:
        g_med = g_p90 = NEVER_REUSED_SECONDS
        g_cv = 0.0

    vals = trace.value[trace.kind == AccessKind.WRITE]
    if len(vals):
        pop = np.unpackbits(vals.astype("<u4").view(np.uint8).reshape(-1, 4), axis=1).sum(axis=1)
        pop_mean, pop_std = float(pop.mean()), float(pop.std())
        zero_frac = float(np.mean(vals == 0))
        msb_frac = float(np.mean(vals >= 2**31))
        distinct_vals = float(len(np.unique(vals)) / len(vals))
        written_words = float(len(np.unique(words[trace.kind == AccessKind.WRITE])) / spec.footprint_words)
    else:
        pop_mean = pop_std = zero_frac = msb_frac = distinct_vals = written_words = 0.0

    if n > 1:
        stride = np.diff(trace.address.astype(np.int64))
        seq_frac = float(np.mean(stride == 8))
        same_row = float(np.mean(np.diff(words // words_per_row) == 0))
    else:
        seq_frac = same_row = 0.0

    distinct = len(per_word)
    return (
        ("read_fraction", (n - n_writes) / n if n else 0.0),
        ("write_fraction", n_writes / n if n else 0.0),
        ("footprint_coverage", distinct / spec.footprint_words),
        ("accesses_per_word_mean", apw_mean),
        ("accesses_per_word_cv", apw_cv),
        ("hot_word_share", hot_share),
        ("max_word_share", float(per_word.max() / n) if n else 0.0),
        ("row_rate_mean", rr_mean),
        ("row_rate_cv", rr_cv),
        ("row_rate_max", float(row_rate.max()) if len(row_rate) else 0.0),
        ("row_rate_skew", rr_skew),
        ("row_rate_kurtosis", rr_kurt),
        ("reuse_gap_median", g_med),
        ("reuse_gap_p90", g_p90),
        ("reuse_gap_cv", g_cv),
        ("first_touch_fraction", distinct / n if n else 0.0),
        ("distinct_value_fraction", distinct_vals),
        ("value_popcount_mean", pop_mean),
        ("value_popcount_std", pop_std),
        ("zero_value_fraction", zero_frac),
        ("value_msb_fraction", msb_frac),
        ("written_word_fraction", written_words),
        ("ipc", 1.0 / spec.cpi),
        ("threads", float(spec.threads)),
        ("sequential_stride_fraction", seq_frac),
        ("same_row_fraction", same_row),
    )


@dataclass(frozen=True)
class ProgramFeatures:
    """The env-independent part of a FeatureVector, computed once per trace."""

    workload: str
    t_reuse: float
    h_dp: float
    mem_accesses_per_cycle: float
    wait_cycles_ratio: float
    nuisance: tuple[tuple[str, float], ...]

    def at(self, t_refp: float, v_dd: float, temp: float, device: str) -> FeatureVector:
        return FeatureVector(
            self.workload, self.t_reuse, self.h_dp, self.mem_accesses_per_cycle,
            self.wait_cycles_ratio, t_refp, v_dd, temp, device, self.nuisance,
        )


def program_features(
    trace: MemoryTrace,
    clock_hz: float = DEFAULT_CLOCK_HZ,
    stall_cycles: float = DEFAULT_STALL_CYCLES,
    words_per_row: int = 1024,
) -> ProgramFeatures:
    return ProgramFeatures(
        workload=trace.spec.name,
        t_reuse=encode_reuse(reuse_time(trace, clock_hz)),
        h_dp=data_entropy(trace),
        mem_accesses_per_cycle=access_rate(trace),
        wait_cycles_ratio=wait_cycles_ratio(trace, stall_cycles),
        nuisance=nuisance_features(trace, clock_hz, words_per_row),
    )


def extract_features(
    trace: MemoryTrace,
    env,
    device: str,
    clock_hz: float = DEFAULT_CLOCK_HZ,
    stall_cycles: float = DEFAULT_STALL_CYCLES,
    words_per_row: int = 1024,
) -> FeatureVector:
    """Profile ``trace`` and attach the operating point ``env`` and ``device``."""
    if hasattr(env, "validate"):
        env.validate()
    pf = program_features(trace, clock_hz, stall_cycles, words_per_row)
    return pf.at(env.t_refp, env.v_dd, env.temp, device)


# -- rank correlation ---------------------------------------------------------


def fractional_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(x)
    starts = np.r_[0, np.flatnonzero(xs[1:] != xs[:-1]) + 1]
    ends = np.r_[starts[1:], n]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) != len(y):
        raise LengthMismatchError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise FeatureError("spearman needs at least 2 observations")
    rx = fractional_ranks(x)
    ry = fractional_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroRankVarianceError("zero rank variance; correlation undefined")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def rank_features(dataset, target: str | None = None) -> list[tuple[str, float]]:
    """Program features ordered by descending |r_s| against the dataset target.

    Features that are constant over the dataset have no defined correlation
    and are left out.
    """
    if target is not None and target != dataset.target_kind:
        raise FeatureError(f"dataset holds {dataset.target_kind} targets, not {target}")
    if len(dataset) < 3:
        raise FeatureError("rank_features needs at least 3 samples")
    y = dataset.targets
    if np.all(y == y[0]):
        raise ConstantTargetError("target is constant; correlations undefined")
    out = []
    for name in dataset.program_columns:
        col = dataset.column(name)
        if np.all(col == col[0]):
            continue
        out.append((name, spearman(col, y)))
    out.sort(key=lambda item: (-abs(item[1]), item[0]))
    return out

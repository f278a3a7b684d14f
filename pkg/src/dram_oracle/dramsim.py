"""Retention-error simulator: weak-cell DIMM profiles, per-run bit flips, WER and P_UE.

Only weak cells (retention below ``retention_ceiling`` at 50 C / 1.5 V) are
materialized; every other cell holds its charge for any supported refresh
period. A run flips a weak cell when its temperature/voltage-adjusted,
noise-perturbed retention is shorter than the interval between refreshes of
its word, and the stored bit differs from the cell's discharged value.

DimmProfile file layout (little-endian)::

    magic b"DODM", version u16, metadata pairs (as in trace files),
    n_cells u64, then n_cells x (u64 word, u8 bit, f64 retention, u8 orientation)
"""
from __future__ import annotations

import io
import math
import os
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from . import config as cfgio
from .trace import (
    DEFAULT_ROWS,
    DEFAULT_WORDS_PER_ROW,
    MemoryTrace,
    decode_pairs,
    encode_pairs,
    last_write_per_address,
    reuse_gaps,
)

REF_TEMP = 50.0
REF_VDD = 1.5
T_REFP_RANGE = (0.064, 2.283)
VDD_RANGE = (1.428, 1.5)
TEMP_RANGE = (50.0, 70.0)
NOMINAL_T_REFP = 0.064

DIMM_MAGIC = b"DODM"
DIMM_VERSION = 1
CELL_DTYPE = np.dtype(
    {
        "names": ["word", "bit", "retention", "orientation"],
        "formats": ["<u8", "u1", "<f8", "u1"],
        "offsets": [0, 8, 9, 17],
        "itemsize": 18,
    }
)

_MASK64 = (1 << 64) - 1


class SimulationError(ValueError):
    pass


class EnvError(SimulationError):
    pass


class FootprintError(SimulationError):
    pass


class DimmFormatError(Exception):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Simulator constants. Every field has a default; files use ``key = value``."""

    n_rows: int = DEFAULT_ROWS
    words_per_row: int = DEFAULT_WORDS_PER_ROW
    # weak cells per bit on a reference (zero-shift) device
    weak_cell_density: float = 0.03
    # log-normal retention of weak cells at 50 C / 1.5 V, seconds
    retention_mu: float = 15.02
    retention_sigma: float = 1.5
    retention_ceiling: float = 40.0
    device_sigma: float = 0.5
    # retention shrinks by exp(-temp_alpha) per degree above 50 C
    temp_alpha: float = 0.1
    volt_beta: float = 0.5
    hammer_threshold: float = 1.0e4
    interference_factor: float = 0.5
    vrt_sigma: float = 0.05
    reset_pattern: int = 0
    reuse_mode: str = "mean"
    clock_hz: float = 2.4e9
    stall_cycles: float = 100.0
    # operating point at which device WER ratios are quantile-matched
    device_ref_t_refp: float = 2.283
    device_ref_temp: float = 70.0

    def validate(self) -> None:
        if self.n_rows < 1 or self.words_per_row < 1:
            raise SimulationError("geometry: n_rows and words_per_row must be >= 1")
        if self.weak_cell_density < 0:
            raise SimulationError("weak_cell_density: must be >= 0")
        if self.retention_sigma < 0:
            raise SimulationError("retention_sigma: must be >= 0")
        if not self.retention_ceiling > 0:
            raise SimulationError("retention_ceiling: must be > 0")
        if self.device_sigma < 0 or self.vrt_sigma < 0:
            raise SimulationError("device_sigma/vrt_sigma: must be >= 0")
        if not (0 < self.interference_factor <= 1):
            raise SimulationError("interference_factor: must lie in (0, 1]")
        if self.reuse_mode not in ("mean", "min"):
            raise SimulationError("reuse_mode: expected 'mean' or 'min'")
        if not self.clock_hz > 0:
            raise SimulationError("clock_hz: must be > 0")
        if not (0 <= self.reset_pattern <= _MASK64):
            raise SimulationError("reset_pattern: must be a 64-bit value")

    @property
    def capacity_words(self) -> int:
        return self.n_rows * self.words_per_row

    def to_text(self) -> str:
        return cfgio.to_text(self)

    @classmethod
    def from_text(cls, text: str) -> "SimConfig":
        return cfgio.from_pairs(cls, cfgio.parse_pairs(text))


@dataclass(frozen=True)
class EnvPoint:
    t_refp: float
    v_dd: float = 1.428
    temp: float = 50.0

    def validate(self) -> None:
        for name, value, (lo, hi) in (
            ("t_refp", self.t_refp, T_REFP_RANGE),
            ("v_dd", self.v_dd, VDD_RANGE),
            ("temp", self.temp, TEMP_RANGE),
        ):
            if not (lo - 1e-9 <= value <= hi + 1e-9):
                raise EnvError(f"{name}: {value} outside supported range [{lo}, {hi}]")


# -- device profiles ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DimmProfile:
    device_id: str
    n_rows: int
    words_per_row: int
    device_seed: int
    spread: float
    cell_word: np.ndarray
    cell_bit: np.ndarray
    retention: np.ndarray
    orientation: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.cell_word)

    @property
    def capacity_words(self) -> int:
        return self.n_rows * self.words_per_row

    @cached_property
    def weak_cells(self) -> dict[tuple[int, int], float]:
        return {
            (w * 8, b): r
            for w, b, r in zip(self.cell_word.tolist(), self.cell_bit.tolist(), self.retention.tolist())
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DimmProfile):
            return NotImplemented
        return (
            (self.device_id, self.n_rows, self.words_per_row, self.device_seed, self.spread)
            == (other.device_id, other.n_rows, other.words_per_row, other.device_seed, other.spread)
            and np.array_equal(self.cell_word, other.cell_word)
            and np.array_equal(self.cell_bit, other.cell_bit)
            and np.array_equal(self.retention, other.retention)
            and np.array_equal(self.orientation, other.orientation)
        )

    __hash__ = None  # type: ignore[assignment]


def _reference_interval(config: SimConfig) -> float:
    """Reference refresh interval expressed at 50 C / 1.5 V."""
    return config.device_ref_t_refp * math.exp(config.temp_alpha * (config.device_ref_temp - REF_TEMP))


def _tail_fraction(config: SimConfig, t: float, shift: float) -> float:
    if config.retention_sigma == 0:
        return float(math.log(t) >= config.retention_mu + shift)
    return float(ndtr((math.log(t) - config.retention_mu - shift) / config.retention_sigma))


def expected_weak_fraction(config: SimConfig, t: float, shift: float = 0.0) -> float:
    """Expected share of cells failing at base-referred interval ``t``, relative to a zero-shift device."""
    return _tail_fraction(config, min(t, config.retention_ceiling), shift)


def quantile_matched_shift(config: SimConfig, wer_scale: float) -> float:
    """Log-retention shift giving ``wer_scale`` times the reference device's failing cells.

    The ratio is matched on the retention CDF at the reference interval, so a
    device built with this shift shows about ``wer_scale`` x the WER of a
    zero-shift device at that operating point.
    """
    if not wer_scale > 0:
        raise SimulationError("wer_scale: must be > 0")
    if wer_scale == 1.0:
        return 0.0
    t = _reference_interval(config)
    base = _tail_fraction(config, t, 0.0)
    if base == 0.0 or config.retention_sigma == 0:
        raise SimulationError("reference device has no failing cells at the reference interval")
    target = base * wer_scale
    if target >= 1.0:
        raise SimulationError(f"wer_scale {wer_scale} unreachable at the reference interval")
    sigma = config.retention_sigma
    return float(brentq(lambda s: _tail_fraction(config, t, s) - target, -60 * sigma, 60 * sigma, xtol=1e-12))


def build_dimm(
    config: SimConfig,
    device_seed: int,
    device_id: str | None = None,
    shift: float | None = None,
) -> DimmProfile:
    """Sample the weak-cell map of one DIMM/rank.

    The log-retention shift is drawn from N(0, device_sigma) unless given.
    """
    config.validate()
    rng = np.random.default_rng([device_seed, 0xD1AA])
    if shift is None:
        shift = float(rng.normal(0.0, config.device_sigma)) if config.device_sigma > 0 else 0.0
    device_id = device_id or f"dimm{device_seed}"
    n_bits = config.capacity_words * 64
    mu = config.retention_mu + shift
    sigma = config.retention_sigma
    log_c = math.log(config.retention_ceiling)
    if sigma > 0:
        p_below = float(ndtr((log_c - mu) / sigma))
        p_ref = float(ndtr((log_c - config.retention_mu) / sigma))
    else:
        p_below = float(mu <= log_c)
        p_ref = float(config.retention_mu <= log_c)
    scale = p_below / p_ref if p_ref > 0 else 0.0
    expected = config.weak_cell_density * n_bits * scale
    n = int(rng.poisson(expected)) if expected > 0 else 0
    n = min(n, n_bits)

    if 2 * n > n_bits:
        # rejection would stall when most bits are weak
        positions = np.sort(rng.choice(n_bits, size=n, replace=False))
    else:
        positions = np.unique(rng.integers(0, n_bits, size=n, dtype=np.int64))
    while len(positions) < n:
        extra = rng.integers(0, n_bits, size=n - len(positions), dtype=np.int64)
        positions = np.unique(np.concatenate([positions, extra]))
    if sigma > 0 and n:
        u = rng.random(n) * p_below
        retention = np.exp(mu + sigma * ndtri(u))
        np.minimum(retention, config.retention_ceiling, out=retention)
    else:
        retention = np.full(n, math.exp(mu))
    orientation = rng.integers(0, 2, size=n).astype(np.uint8)
    return DimmProfile(
        device_id=device_id,
        n_rows=config.n_rows,
        words_per_row=config.words_per_row,
        device_seed=device_seed,
        spread=float(shift),
        cell_word=positions // 64,
        cell_bit=(positions % 64).astype(np.uint8),
        retention=retention,
        orientation=orientation,
    )


def dimm_from_cells(
    device_id: str,
    cells: Sequence[tuple[int, int, float, int]],
    n_rows: int = DEFAULT_ROWS,
    words_per_row: int = DEFAULT_WORDS_PER_ROW,
    device_seed: int = 0,
) -> DimmProfile:
    """Hand-built profile from ``(word_address, bit, retention, orientation)`` tuples."""
    cells = sorted(cells)
    return DimmProfile(
        device_id=device_id,
        n_rows=n_rows,
        words_per_row=words_per_row,
        device_seed=device_seed,
        spread=0.0,
        cell_word=np.array([c[0] // 8 for c in cells], dtype=np.int64),
        cell_bit=np.array([c[1] for c in cells], dtype=np.uint8),
        retention=np.array([c[2] for c in cells], dtype=np.float64),
        orientation=np.array([c[3] for c in cells], dtype=np.uint8),
    )


def save_dimm(dimm: DimmProfile, sink) -> int:
    cells = np.zeros(dimm.n_cells, dtype=CELL_DTYPE)
    cells["word"] = dimm.cell_word
    cells["bit"] = dimm.cell_bit
    cells["retention"] = dimm.retention
    cells["orientation"] = dimm.orientation
    meta = [
        ("device_id", dimm.device_id),
        ("n_rows", str(dimm.n_rows)),
        ("words_per_row", str(dimm.words_per_row)),
        ("device_seed", str(dimm.device_seed)),
        ("spread", repr(float(dimm.spread))),
    ]
    blob = b"".join(
        [DIMM_MAGIC, struct.pack("<H", DIMM_VERSION), encode_pairs(meta),
         struct.pack("<Q", dimm.n_cells), cells.tobytes()]
    )
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(blob)
    else:
        sink.write(blob)
    return len(blob)


def load_dimm(source) -> DimmProfile:
    if isinstance(source, (bytes, bytearray)):
        fh = io.BytesIO(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            fh = io.BytesIO(f.read())
    else:
        fh = source
    if fh.read(4) != DIMM_MAGIC:
        raise DimmFormatError("not a DIMM profile (bad magic)")
    raw = fh.read(2)
    if len(raw) != 2:
        raise DimmFormatError("truncated header")
    (version,) = struct.unpack("<H", raw)
    if version != DIMM_VERSION:
        raise DimmFormatError(f"DIMM profile version {version} unsupported")
    meta = dict(decode_pairs(fh, error=DimmFormatError))
    raw = fh.read(8)
    if len(raw) != 8:
        raise DimmFormatError("truncated cell count")
    (n,) = struct.unpack("<Q", raw)
    payload = fh.read(n * CELL_DTYPE.itemsize)
    if len(payload) != n * CELL_DTYPE.itemsize:
        raise DimmFormatError("truncated cell table")
    cells = np.frombuffer(payload, dtype=CELL_DTYPE, count=n)
    try:
        return DimmProfile(
            device_id=meta["device_id"],
            n_rows=int(meta["n_rows"]),
            words_per_row=int(meta["words_per_row"]),
            device_seed=int(meta["device_seed"]),
            spread=float(meta["spread"]),
            cell_word=cells["word"].astype(np.int64),
            cell_bit=cells["bit"].copy(),
            retention=cells["retention"].copy(),
            orientation=cells["orientation"].copy(),
        )
    except (KeyError, ValueError) as exc:
        raise DimmFormatError(f"bad metadata: {exc}") from None


# -- physics ------------------------------------------------------------------


def retention_factor(env: EnvPoint, alpha: float = 0.1, beta: float = 0.5) -> float:
    return math.exp(-alpha * (env.temp - REF_TEMP)) * (env.v_dd / REF_VDD) ** beta


def retention_at(base_retention, env: EnvPoint, alpha: float = 0.1, beta: float = 0.5):
    """Retention at ``env`` of a cell whose retention at 50 C / 1.5 V is ``base_retention``.

    Halves every ``ln 2 / alpha`` degrees; scales as ``(v_dd / 1.5) ** beta``.
    """
    return base_retention * retention_factor(env, alpha, beta)


@dataclass(frozen=True, eq=False)
class TraceActivity:
    """Per-word and per-row view of a trace, as the simulator consumes it."""

    mem_size_words: int
    refresh_interval: np.ndarray  # seconds between accesses per word, inf if not reused
    stored: np.ndarray  # uint64 content of each word at the end of the window
    row_rate: np.ndarray  # accesses per second per row
    seconds: float

    def with_intervals(self, refresh_interval: np.ndarray) -> "TraceActivity":
        return replace(self, refresh_interval=np.asarray(refresh_interval, dtype=np.float64))


def trace_activity(trace: MemoryTrace, config: SimConfig | None = None) -> TraceActivity:
    config = config or SimConfig()
    fp = trace.spec.footprint_words
    if fp > config.capacity_words:
        raise FootprintError(
            f"footprint_words: {fp} words exceed device capacity of {config.capacity_words}"
        )
    words = trace.word_index
    if len(words) and int(words.max()) >= fp:
        raise FootprintError(
            f"address: word {int(words.max())} lies outside the {fp}-word footprint"
        )
    seconds_per_instr = trace.spec.cpi / config.clock_hz
    gap_words, gaps = reuse_gaps(trace)
    interval = np.full(fp, np.inf)
    if len(gaps):
        if config.reuse_mode == "mean":
            n = np.bincount(gap_words, minlength=fp)
            s = np.bincount(gap_words, weights=gaps.astype(np.float64), minlength=fp)
            hit = n > 0
            interval[hit] = s[hit] / n[hit] * seconds_per_instr
        else:
            m = np.full(fp, np.inf)
            np.minimum.at(m, gap_words, gaps.astype(np.float64))
            interval = m * seconds_per_instr

    stored = np.full(fp, config.reset_pattern, dtype=np.uint64)
    addrs, vals = last_write_per_address(trace)
    v = vals.astype(np.uint64)
    stored[(addrs // 8).astype(np.int64)] = (v << np.uint64(32)) | v

    seconds = trace.spec.total_cycles / config.clock_hz
    counts = np.bincount(words // config.words_per_row, minlength=config.n_rows).astype(np.float64)
    row_rate = counts / seconds if seconds > 0 else np.zeros(config.n_rows)
    return TraceActivity(fp, interval, stored, row_rate, seconds)


@dataclass(frozen=True)
class RunOutcome:
    ce_words: frozenset[int]
    ue_words: frozenset[int]
    sdc_words: frozenset[int]
    mem_size_words: int

    @property
    def has_ue(self) -> bool:
        return bool(self.ue_words or self.sdc_words)


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def run_seeds(seed: int, n: int) -> list[int]:
    """Seeds of ``n`` repeated runs: the splitmix64 sequence started at ``seed``."""
    out = []
    state = seed & _MASK64
    for _ in range(n):
        out.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
    return out


def vrt_noise(dimm: DimmProfile, run_seed: int, sigma: float) -> np.ndarray:
    """Multiplicative per-cell retention noise of one run (log-normal)."""
    if sigma == 0 or dimm.n_cells == 0:
        return np.ones(dimm.n_cells)
    rng = np.random.default_rng([run_seed, dimm.device_seed, 0x5EED])
    return np.exp(sigma * rng.standard_normal(dimm.n_cells))


def _check_fit(activity: TraceActivity, dimm: DimmProfile) -> None:
    if activity.mem_size_words > dimm.capacity_words:
        raise FootprintError(
            f"footprint of {activity.mem_size_words} words overflows {dimm.device_id} "
            f"({dimm.capacity_words} words)"
        )


@dataclass(frozen=True, eq=False)
class ExposedCells:
    """Weak cells of one DIMM that a given trace leaves able to flip.

    Cells outside the footprint, or whose stored bit already equals their
    discharged value, are dropped. ``retention`` includes the interference
    penalty; ``interval`` is the word's implicit-refresh interval.
    """

    index: np.ndarray  # positions in the DIMM cell table
    word: np.ndarray
    retention: np.ndarray
    interval: np.ndarray
    mem_size_words: int

    def flips(self, env: EnvPoint, noise: np.ndarray, config: SimConfig) -> np.ndarray:
        """Word indices of flipped cells (one entry per flipped bit)."""
        ret = self.retention * noise[self.index]
        ret *= retention_factor(env, config.temp_alpha, config.volt_beta)
        return self.word[ret < np.minimum(env.t_refp, self.interval)]


def disturbed_rows(row_rate: np.ndarray, threshold: float) -> np.ndarray:
    """Rows with at least one neighbouring row accessed faster than ``threshold``/s."""
    hot = row_rate > threshold
    out = np.zeros(len(hot), dtype=bool)
    out[:-1] |= hot[1:]
    out[1:] |= hot[:-1]
    return out


def exposed_cells(activity: TraceActivity, dimm: DimmProfile, config: SimConfig) -> ExposedCells:
    _check_fit(activity, dimm)
    idx = np.flatnonzero(dimm.cell_word < activity.mem_size_words)
    word = dimm.cell_word[idx]
    bit = (activity.stored[word] >> dimm.cell_bit[idx].astype(np.uint64)) & np.uint64(1)
    keep = bit.astype(np.uint8) != dimm.orientation[idx]
    idx, word = idx[keep], word[keep]
    ret = dimm.retention[idx].copy()
    disturbed = disturbed_rows(activity.row_rate, config.hammer_threshold)
    row = word // config.words_per_row
    ret[disturbed[row]] *= config.interference_factor
    return ExposedCells(idx, word, ret, activity.refresh_interval[word], activity.mem_size_words)


def flipped_cells(
    activity: TraceActivity,
    dimm: DimmProfile,
    env: EnvPoint,
    noise: np.ndarray,
    config: SimConfig,
) -> np.ndarray:
    """Word indices of all flipped cells (one entry per flipped bit)."""
    return exposed_cells(activity, dimm, config).flips(env, noise, config)


def classify(flipped_words: np.ndarray, mem_size_words: int) -> RunOutcome:
    words, counts = np.unique(flipped_words, return_counts=True)
    addr = words * 8
    return RunOutcome(
        ce_words=frozenset(addr[counts == 1].tolist()),
        ue_words=frozenset(addr[counts == 2].tolist()),
        sdc_words=frozenset(addr[counts >= 3].tolist()),
        mem_size_words=mem_size_words,
    )


def simulate_run(
    trace: MemoryTrace | TraceActivity,
    dimm: DimmProfile,
    env: EnvPoint,
    run_seed: int,
    config: SimConfig | None = None,
) -> RunOutcome:
    config = config or SimConfig()
    env.validate()
    activity = trace if isinstance(trace, TraceActivity) else trace_activity(trace, config)
    _check_fit(activity, dimm)
    noise = vrt_noise(dimm, run_seed, config.vrt_sigma)
    return classify(flipped_cells(activity, dimm, env, noise, config), activity.mem_size_words)


def measure_wer(outcome: RunOutcome) -> float:
    if outcome.mem_size_words <= 0:
        raise SimulationError("mem_size_words is zero; WER undefined")
    return len(outcome.ce_words) / outcome.mem_size_words


def pue_from_outcomes(outcomes: Sequence[RunOutcome]) -> float:
    if not outcomes:
        raise SimulationError("n_exp must be >= 1")
    return sum(o.has_ue for o in outcomes) / len(outcomes)


def estimate_pue(
    trace: MemoryTrace | TraceActivity,
    dimm: DimmProfile,
    env: EnvPoint,
    n_exp: int = 10,
    seed: int = 0,
    config: SimConfig | None = None,
) -> float:
    """Fraction of ``n_exp`` runs in which an uncorrectable (or silent) error appears."""
    if n_exp < 1:
        raise SimulationError("n_exp must be >= 1")
    config = config or SimConfig()
    activity = trace if isinstance(trace, TraceActivity) else trace_activity(trace, config)
    return pue_from_outcomes(
        [simulate_run(activity, dimm, env, s, config) for s in run_seeds(seed, n_exp)]
    )


@dataclass(frozen=True)
class Characterization:
    """Labels of one (workload, device, env) cell over ``n_exp`` runs."""

    wer: float  # mean over runs
    p_ue: float
    outcomes: tuple[RunOutcome, ...] = field(repr=False)


def characterize(
    activity: TraceActivity,
    dimm: DimmProfile,
    envs: Sequence[EnvPoint],
    n_exp: int = 10,
    seed: int = 0,
    config: SimConfig | None = None,
) -> list[Characterization]:
    """Run ``n_exp`` experiments at each env, sharing the per-run noise draws."""
    if n_exp < 1:
        raise SimulationError("n_exp must be >= 1")
    config = config or SimConfig()
    for env in envs:
        env.validate()
    cells = exposed_cells(activity, dimm, config)
    per_env: list[list[RunOutcome]] = [[] for _ in envs]
    for s in run_seeds(seed, n_exp):
        noise = vrt_noise(dimm, s, config.vrt_sigma)
        for i, env in enumerate(envs):
            per_env[i].append(classify(cells.flips(env, noise, config), activity.mem_size_words))
    return [
        Characterization(
            wer=float(np.mean([measure_wer(o) for o in outs])),
            p_ue=pue_from_outcomes(outs),
            outcomes=tuple(outs),
        )
        for outs in per_env
    ]


def system_pue(per_device: Sequence[Sequence[RunOutcome]]) -> float:
    """P_UE of a machine holding several DIMMs: a run fails if any DIMM shows a UE.

    ``per_device[d][r]`` is the outcome of run ``r`` on device ``d``; runs
    with the same index share a run seed.
    """
    n = len(per_device[0])
    return sum(any(dev[r].has_ue for dev in per_device) for r in range(n)) / n

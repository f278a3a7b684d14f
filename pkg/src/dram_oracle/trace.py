"""Memory-access traces: data model, synthetic generators and the DOTR file format.

A trace is held column-wise (numpy arrays) because the generators produce
millions of accesses; ``MemoryTrace.accesses`` gives the record view.

File layout (all little-endian)::

    magic   4s   b"DOTR"
    version u16
    n_meta  u32
    n_meta x (u32 length, UTF-8 "key=value")
    n_rec   u64
    n_rec x 24-byte record: u64 instr_index, u64 address, u8 kind, u32 value, 3 pad
"""
from __future__ import annotations

import dataclasses
import io
import os
import struct
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import BinaryIO, Iterator, Sequence

import numpy as np

WORD_BYTES = 8
DEFAULT_WORDS_PER_ROW = 1024
DEFAULT_ROWS = 256
DEFAULT_CAPACITY_WORDS = DEFAULT_ROWS * DEFAULT_WORDS_PER_ROW

TRACE_MAGIC = b"DOTR"
TRACE_VERSION = 1
RECORD_SIZE = 24
RECORD_DTYPE = np.dtype(
    {
        "names": ["instr_index", "address", "kind", "value"],
        "formats": ["<u8", "<u8", "u1", "<u4"],
        "offsets": [0, 8, 16, 17],
        "itemsize": RECORD_SIZE,
    }
)

SPARSE_ALPHABET = 1 << 20
REUSE_PROFILES = ("uniform", "zipfian", "streaming")


class AccessKind(IntEnum):
    READ = 0
    WRITE = 1


class SpecError(ValueError):
    """A WorkloadSpec violates its invariants or cannot be generated."""


class TraceFormatError(Exception):
    pass


class BadMagicError(TraceFormatError):
    pass


class TruncatedTraceError(TraceFormatError):
    pass


class UnsupportedVersionError(TraceFormatError):
    pass


@dataclass(frozen=True)
class MemoryAccess:
    instr_index: int
    address: int
    kind: AccessKind
    value: int | None = None


@dataclass(frozen=True)
class WorkloadSpec:
    """Parameters of a synthetic workload.

    ``reuse_profile`` is one of ``uniform``, ``zipfian`` (exponent
    ``zipf_s``) or ``streaming`` (cyclic sequential sweep). ``data_seed``
    selects the written data independently of the access pattern so that
    variants of one program can share a data pattern; it defaults to
    ``seed``.
    """

    name: str
    n_instructions: int
    footprint_words: int
    target_access_rate: float
    cpi: float = 1.0
    write_fraction: float = 0.3
    value_alphabet_size: int = 256
    reuse_profile: str = "uniform"
    zipf_s: float = 1.0
    threads: int = 1
    seed: int = 0
    data_seed: int | None = None

    def validate(self, capacity_words: int = DEFAULT_CAPACITY_WORDS) -> None:
        if not self.name or "=" in self.name or "\n" in self.name:
            raise SpecError(f"name: invalid workload name {self.name!r}")
        if self.n_instructions < 0:
            raise SpecError("n_instructions: must be >= 0")
        if self.footprint_words < 1:
            raise SpecError("footprint_words: must be >= 1")
        if self.footprint_words > capacity_words:
            raise SpecError(
                f"footprint_words: {self.footprint_words} words exceed device "
                f"capacity of {capacity_words} words"
            )
        if not (0.0 < self.target_access_rate <= 1.0):
            raise SpecError("target_access_rate: must lie in (0, 1]")
        if not self.cpi > 0:
            raise SpecError("cpi: must be > 0")
        if not (0.0 <= self.write_fraction <= 1.0):
            raise SpecError("write_fraction: must lie in [0, 1]")
        if not (1 <= self.value_alphabet_size <= 2**32):
            raise SpecError("value_alphabet_size: must lie in [1, 2^32]")
        if self.reuse_profile not in REUSE_PROFILES:
            raise SpecError(f"reuse_profile: unknown profile {self.reuse_profile!r}")
        if self.reuse_profile == "zipfian" and not self.zipf_s > 0:
            raise SpecError("zipf_s: must be > 0")
        if self.threads < 1:
            raise SpecError("threads: must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise SpecError("seed: must be a 64-bit unsigned integer")

    @property
    def total_cycles(self) -> float:
        return self.n_instructions * self.cpi

    @property
    def n_accesses(self) -> int:
        return int(round(self.target_access_rate * self.total_cycles))

    @property
    def effective_data_seed(self) -> int:
        return self.seed if self.data_seed is None else self.data_seed

    def to_pairs(self) -> list[tuple[str, str]]:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out.append((f.name, "" if v is None else (repr(v) if isinstance(v, float) else str(v))))
        return out

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, str]] | dict[str, str]) -> "WorkloadSpec":
        items = dict(pairs)
        kwargs: dict[str, object] = {}
        for f in dataclasses.fields(cls):
            if f.name not in items:
                continue
            raw = items[f.name]
            if f.name == "name" or f.name == "reuse_profile":
                kwargs[f.name] = raw
            elif f.name == "data_seed":
                kwargs[f.name] = None if raw == "" else int(raw)
            elif f.type in ("int",):
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        try:
            return cls(**kwargs)  # type: ignore[arg-type]
        except TypeError as exc:
            raise SpecError(str(exc)) from None


class MemoryTrace:
    """An immutable, ordered record of memory accesses plus its workload spec."""

    def __init__(self, spec: WorkloadSpec, instr_index, address, kind, value):
        arrays = (
            np.ascontiguousarray(instr_index, dtype=np.uint64),
            np.ascontiguousarray(address, dtype=np.uint64),
            np.ascontiguousarray(kind, dtype=np.uint8),
            np.ascontiguousarray(value, dtype=np.uint32),
        )
        n = len(arrays[0])
        if any(len(a) != n for a in arrays):
            raise ValueError("trace columns have different lengths")
        ii, addr, kd, val = arrays
        if n:
            if np.any(addr % WORD_BYTES):
                raise ValueError("address: every address must be a multiple of 8")
            if n > 1 and np.any(ii[1:] <= ii[:-1]):
                raise ValueError("instr_index: must be strictly increasing")
            if np.any(kd > 1):
                raise ValueError("kind: must be 0 (read) or 1 (write)")
            if np.any(val[kd == AccessKind.READ]):
                raise ValueError("value: reads carry no value")
        for a in arrays:
            a.flags.writeable = False
        self.spec = spec
        self.instr_index, self.address, self.kind, self.value = arrays

    @classmethod
    def from_accesses(cls, spec: WorkloadSpec, accesses: Sequence[MemoryAccess]) -> "MemoryTrace":
        return cls(
            spec,
            [a.instr_index for a in accesses],
            [a.address for a in accesses],
            [int(a.kind) for a in accesses],
            [0 if a.value is None else a.value for a in accesses],
        )

    def __len__(self) -> int:
        return len(self.address)

    def __iter__(self) -> Iterator[MemoryAccess]:
        for ii, addr, kd, val in zip(
            self.instr_index.tolist(), self.address.tolist(), self.kind.tolist(), self.value.tolist()
        ):
            kind = AccessKind(kd)
            yield MemoryAccess(ii, addr, kind, val if kind == AccessKind.WRITE else None)

    @property
    def accesses(self) -> tuple[MemoryAccess, ...]:
        return tuple(self)

    @property
    def total_cycles(self) -> float:
        return self.spec.total_cycles

    @cached_property
    def word_index(self) -> np.ndarray:
        return (self.address // WORD_BYTES).astype(np.int64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryTrace):
            return NotImplemented
        return (
            self.spec == other.spec
            and np.array_equal(self.instr_index, other.instr_index)
            and np.array_equal(self.address, other.address)
            and np.array_equal(self.kind, other.kind)
            and np.array_equal(self.value, other.value)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"MemoryTrace({self.spec.name!r}, {len(self)} accesses)"


# -- generation ---------------------------------------------------------------


def _instruction_slots(rng: np.random.Generator, n_instructions: int, n: int) -> np.ndarray:
    # one access per bin [i*s, (i+1)*s), s = n_instructions / n >= 1
    i = np.arange(n, dtype=np.int64)
    lo = (i * n_instructions) // n
    hi = ((i + 1) * n_instructions) // n
    return (lo + np.floor(rng.random(n) * (hi - lo)).astype(np.int64)).astype(np.uint64)


def zipf_rank_cdf(n_items: int, s: float) -> np.ndarray:
    """CDF of a Zipf(s) law truncated to ranks 1..n_items."""
    w = np.arange(1, n_items + 1, dtype=np.float64) ** (-s)
    cdf = np.cumsum(w)
    return cdf / cdf[-1]


def zipf_rank_order(footprint: int, words_per_row: int) -> np.ndarray:
    """Map popularity rank -> word index.

    Consecutive ranks fill one row, so popularity is clustered by row. Row
    blocks are laid out centre-out (hottest in the middle, then alternating
    sides), which makes the neighbours of a hot row the next-hottest rows.
    """
    n_blocks = -(-footprint // words_per_row)
    c = (n_blocks - 1) // 2
    k = np.arange(n_blocks)
    pos = c + np.where(k % 2 == 1, (k + 1) // 2, -(k // 2))
    order = (pos[:, None] * words_per_row + np.arange(words_per_row)[None, :]).ravel()
    return order[order < footprint]


def generate_trace(
    spec: WorkloadSpec,
    capacity_words: int = DEFAULT_CAPACITY_WORDS,
    words_per_row: int = DEFAULT_WORDS_PER_ROW,
) -> MemoryTrace:
    spec.validate(capacity_words)
    n = spec.n_accesses
    if n > spec.n_instructions:
        raise SpecError(
            "target_access_rate: rate x cpi exceeds one access per instruction "
            f"({n} accesses for {spec.n_instructions} instructions)"
        )
    rng = np.random.default_rng([spec.seed, 0x70ACE])
    fp = spec.footprint_words
    instr = _instruction_slots(rng, spec.n_instructions, n)

    if spec.reuse_profile == "uniform":
        words = rng.integers(0, fp, size=n, dtype=np.int64)
    elif spec.reuse_profile == "zipfian":
        cdf = zipf_rank_cdf(fp, spec.zipf_s)
        ranks = np.searchsorted(cdf, rng.random(n), side="right")
        np.minimum(ranks, fp - 1, out=ranks)
        words = zipf_rank_order(fp, words_per_row)[ranks]
    else:
        # threads sweep the shared footprint from staggered start offsets
        i = np.arange(n, dtype=np.int64)
        t = i % spec.threads
        words = (t * fp // spec.threads + i // spec.threads) % fp

    is_write = _write_draws(words, spec.effective_data_seed) < spec.write_fraction
    kind = is_write.astype(np.uint8)
    value = np.zeros(n, dtype=np.uint32)
    if is_write.any():
        alphabet, word_symbol = _data_pattern(spec)
        value[is_write] = alphabet[word_symbol[words[is_write]]]
    return MemoryTrace(spec, instr, words.astype(np.uint64) * WORD_BYTES, kind, value)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer, vectorized over uint64 (wrapping arithmetic)
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _write_draws(words: np.ndarray, data_seed: int) -> np.ndarray:
    """Uniform [0, 1) draw per access, keyed by (data seed, word, occurrence).

    The k-th touch of a word gets the same draw whatever the interleaving,
    so workloads sharing a data seed and access multiset write the same words.
    """
    n = len(words)
    order = np.argsort(words, kind="stable")
    sw = words[order]
    starts = np.r_[0, np.flatnonzero(sw[1:] != sw[:-1]) + 1] if n else np.zeros(0, np.int64)
    group_start = np.repeat(starts, np.diff(np.r_[starts, n]))
    occ = np.empty(n, dtype=np.int64)
    occ[order] = np.arange(n) - group_start
    with np.errstate(over="ignore"):
        key = _mix64(np.full(n, data_seed & (2**64 - 1), dtype=np.uint64) + np.uint64(0x9E3779B97F4A7C15))
        key = _mix64(key ^ words.astype(np.uint64) * np.uint64(0xD6E8FEB86659FD93))
        key = _mix64(key ^ occ.astype(np.uint64))
    return (key >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _data_pattern(spec: WorkloadSpec) -> tuple[np.ndarray, np.ndarray]:
    """Alphabet of distinct 32-bit values and the symbol each word receives."""
    rng = np.random.default_rng([spec.effective_data_seed, 0xDA7A])
    a = spec.value_alphabet_size
    if a > SPARSE_ALPHABET:
        # only symbols some word actually holds need a value
        used, word_symbol = np.unique(
            rng.integers(0, a, size=spec.footprint_words, dtype=np.int64), return_inverse=True
        )
        picked = np.unique(rng.integers(0, 2**32, size=len(used), dtype=np.uint64))
        while len(picked) < len(used):
            more = rng.integers(0, 2**32, size=len(used) - len(picked), dtype=np.uint64)
            picked = np.unique(np.concatenate([picked, more]))
        return rng.permutation(picked).astype(np.uint32), word_symbol.astype(np.int64)
    picked = np.unique(rng.integers(0, 2**32, size=a, dtype=np.uint64))
    while len(picked) < a:
        more = rng.integers(0, 2**32, size=a - len(picked), dtype=np.uint64)
        picked = np.unique(np.concatenate([picked, more]))
    alphabet = rng.permutation(picked).astype(np.uint32)
    word_symbol = rng.integers(0, a, size=spec.footprint_words, dtype=np.int64)
    return alphabet, word_symbol


# -- file format --------------------------------------------------------------


def _open_sink(sink):
    if isinstance(sink, (str, os.PathLike)):
        return open(sink, "wb"), True
    return sink, False


def _open_source(source):
    if isinstance(source, (bytes, bytearray, memoryview)):
        return io.BytesIO(source), True
    if isinstance(source, (str, os.PathLike)):
        return open(source, "rb"), True
    return source, False


def encode_pairs(pairs: Sequence[tuple[str, str]]) -> bytes:
    parts = [struct.pack("<I", len(pairs))]
    for k, v in pairs:
        blob = f"{k}={v}".encode("utf-8")
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedTraceError(f"truncated {what}: wanted {n} bytes, got {len(data)}")
    return data


def decode_pairs(fh: BinaryIO, error=TruncatedTraceError) -> list[tuple[str, str]]:
    def need(n: int, what: str) -> bytes:
        data = fh.read(n)
        if len(data) != n:
            raise error(f"truncated {what}")
        return data

    (count,) = struct.unpack("<I", need(4, "metadata count"))
    pairs = []
    for _ in range(count):
        (length,) = struct.unpack("<I", need(4, "metadata entry length"))
        text = need(length, "metadata entry").decode("utf-8")
        key, sep, val = text.partition("=")
        if not sep:
            raise error(f"metadata entry without '=': {text!r}")
        pairs.append((key, val))
    return pairs


def write_trace(trace: MemoryTrace, sink) -> int:
    """Serialize ``trace``; returns the number of bytes written."""
    records = np.zeros(len(trace), dtype=RECORD_DTYPE)
    records["instr_index"] = trace.instr_index
    records["address"] = trace.address
    records["kind"] = trace.kind
    records["value"] = trace.value
    blob = b"".join(
        [
            TRACE_MAGIC,
            struct.pack("<H", TRACE_VERSION),
            encode_pairs(trace.spec.to_pairs()),
            struct.pack("<Q", len(trace)),
            records.tobytes(),
        ]
    )
    fh, owned = _open_sink(sink)
    try:
        fh.write(blob)
    finally:
        if owned:
            fh.close()
    return len(blob)


def read_trace(source) -> MemoryTrace:
    fh, owned = _open_source(source)
    try:
        magic = fh.read(4)
        if magic != TRACE_MAGIC:
            raise BadMagicError(f"not a trace file (magic {magic!r})")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != TRACE_VERSION:
            raise UnsupportedVersionError(f"trace version {version} unsupported")
        pairs = decode_pairs(fh)
        (n,) = struct.unpack("<Q", _read_exact(fh, 8, "record count"))
        payload = _read_exact(fh, n * RECORD_SIZE, f"{n} access records")
    finally:
        if owned:
            fh.close()
    try:
        spec = WorkloadSpec.from_pairs(pairs)
    except (ValueError, KeyError) as exc:
        raise TraceFormatError(f"bad metadata: {exc}") from None
    rec = np.frombuffer(payload, dtype=RECORD_DTYPE, count=n)
    return MemoryTrace(spec, rec["instr_index"], rec["address"], rec["kind"], rec["value"])


# -- statistics ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TraceStats:
    n_reads: int
    n_writes: int
    distinct_addresses: int
    final_value_addresses: np.ndarray
    final_value_values: np.ndarray
    row_counts: dict[int, int]

    @property
    def n_accesses(self) -> int:
        return self.n_reads + self.n_writes

    @cached_property
    def final_values(self) -> dict[int, int]:
        return dict(zip(self.final_value_addresses.tolist(), self.final_value_values.tolist()))


def last_write_per_address(trace: MemoryTrace) -> tuple[np.ndarray, np.ndarray]:
    """Sorted written addresses and the value of the last write to each."""
    w = np.flatnonzero(trace.kind == AccessKind.WRITE)
    if len(w) == 0:
        return np.zeros(0, np.uint64), np.zeros(0, np.uint32)
    addr = trace.address[w]
    order = np.argsort(addr, kind="stable")
    a_sorted = addr[order]
    last = np.r_[a_sorted[1:] != a_sorted[:-1], True]
    return a_sorted[last], trace.value[w][order][last]


def reuse_gaps(trace: MemoryTrace) -> tuple[np.ndarray, np.ndarray]:
    """Instruction distance of every access to the previous access of its word.

    Returns ``(word, gap)`` for accesses that have a prior reference; first
    touches contribute nothing.
    """
    words = trace.word_index
    order = np.argsort(words, kind="stable")
    w = words[order]
    ii = trace.instr_index[order].astype(np.int64)
    same = w[1:] == w[:-1]
    return w[1:][same], (ii[1:] - ii[:-1])[same]


def trace_stats(trace: MemoryTrace, words_per_row: int = DEFAULT_WORDS_PER_ROW) -> TraceStats:
    n_writes = int(np.count_nonzero(trace.kind))
    addrs, vals = last_write_per_address(trace)
    rows, counts = np.unique(trace.word_index // words_per_row, return_counts=True)
    return TraceStats(
        n_reads=len(trace) - n_writes,
        n_writes=n_writes,
        distinct_addresses=int(len(np.unique(trace.address))),
        final_value_addresses=addrs,
        final_value_values=vals,
        row_counts=dict(zip(rows.tolist(), counts.tolist())),
    )

"""Labeled samples (FeatureVector -> WER or P_UE) and their CSV form.

Column order: workload, device, temp, t_refp, v_dd, t_reuse, h_dp,
mem_accesses_per_cycle, wait_cycles_ratio, nuisance..., then the target
column, named ``wer`` or ``p_ue``.
"""
from __future__ import annotations

import csv
import io
import os
from collections.abc import Iterable, Sequence
from functools import cached_property

import numpy as np

from .features import CORE_FEATURES, ENV_COLUMNS, FeatureVector

TARGET_KINDS = ("wer", "p_ue")
LEADING_COLUMNS = ("workload", "device") + ENV_COLUMNS + CORE_FEATURES


class DatasetError(ValueError):
    pass


class Dataset:
    """Immutable list of ``(FeatureVector, target)`` pairs sharing one schema."""

    def __init__(self, samples: Iterable[tuple[FeatureVector, float]], target_kind: str):
        if target_kind not in TARGET_KINDS:
            raise DatasetError(f"target_kind: expected one of {TARGET_KINDS}, got {target_kind!r}")
        self.samples: tuple[tuple[FeatureVector, float], ...] = tuple(
            (fv, float(t)) for fv, t in samples
        )
        self.target_kind = target_kind
        if self.samples:
            names = self.samples[0][0].program_feature_names
            for fv, t in self.samples:
                if fv.program_feature_names != names:
                    raise DatasetError(f"sample for {fv.workload!r} has a different column schema")
                if not np.isfinite(t) or t < 0 or t > 1:
                    raise DatasetError(f"target {t!r} outside [0, 1] for {fv.workload!r}")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.target_kind == other.target_kind and self.samples == other.samples

    __hash__ = None  # type: ignore[assignment]

    @property
    def features(self) -> list[FeatureVector]:
        return [fv for fv, _ in self.samples]

    @cached_property
    def targets(self) -> np.ndarray:
        return np.array([t for _, t in self.samples], dtype=np.float64)

    @cached_property
    def workloads(self) -> np.ndarray:
        return np.array([fv.workload for fv, _ in self.samples], dtype=object)

    @cached_property
    def devices(self) -> np.ndarray:
        return np.array([fv.device for fv, _ in self.samples], dtype=object)

    @cached_property
    def workload_index(self) -> dict[str, list[int]]:
        index: dict[str, list[int]] = {}
        for i, (fv, _) in enumerate(self.samples):
            index.setdefault(fv.workload, []).append(i)
        return index

    @property
    def program_columns(self) -> tuple[str, ...]:
        if not self.samples:
            return CORE_FEATURES
        return self.samples[0][0].program_feature_names

    @property
    def schema(self) -> tuple[str, ...]:
        """All numeric column names, in CSV order."""
        return ENV_COLUMNS + self.program_columns

    @cached_property
    def _numeric(self) -> dict[str, np.ndarray]:
        cols: dict[str, list[float]] = {name: [] for name in self.schema}
        for fv, _ in self.samples:
            for k, v in fv.as_dict().items():
                cols[k].append(v)
        return {k: np.asarray(v, dtype=np.float64) for k, v in cols.items()}

    def column(self, name: str) -> np.ndarray:
        try:
            return self._numeric[name]
        except KeyError:
            raise DatasetError(f"unknown column {name!r}") from None

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], self.target_kind)

    def with_targets(self, targets: Sequence[float]) -> "Dataset":
        return Dataset(zip(self.features, targets), self.target_kind)


def header_for(dataset: Dataset) -> list[str]:
    return list(LEADING_COLUMNS) + [c for c in dataset.program_columns if c not in CORE_FEATURES] + [
        dataset.target_kind
    ]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(dataset: Dataset, sink) -> None:
    owned = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", newline="") if owned else sink
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header_for(dataset))
        for fv, t in dataset:
            w.writerow(
                [fv.workload, fv.device]
                + [_fmt(fv.temp), _fmt(fv.t_refp), _fmt(fv.v_dd)]
                + [_fmt(getattr(fv, c)) for c in CORE_FEATURES]
                + [_fmt(v) for _, v in fv.nuisance]
                + [_fmt(t)]
            )
    finally:
        if owned:
            fh.close()


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    write_dataset(dataset, buf)
    return buf.getvalue()


def read_dataset(source) -> Dataset:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return _parse(fh)
    return _parse(source)


def dataset_from_csv(text: str) -> Dataset:
    return _parse(io.StringIO(text))


def _parse(fh) -> Dataset:
    fvs, targets, target_kind = _parse_rows(fh, require_target=True)
    return Dataset(zip(fvs, targets), target_kind)


def read_features(source) -> list[FeatureVector]:
    """Feature vectors from a dataset-schema CSV; the target column is optional."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return _parse_rows(fh, require_target=False)[0]
    return _parse_rows(source, require_target=False)[0]


def _parse_rows(fh, require_target: bool):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty dataset file") from None
    n_lead = len(LEADING_COLUMNS)
    if tuple(header[:n_lead]) != LEADING_COLUMNS:
        raise DatasetError(f"unexpected header; expected it to start with {LEADING_COLUMNS}")
    target_kind = header[-1] if len(header) > n_lead else None
    if target_kind not in TARGET_KINDS:
        if require_target:
            raise DatasetError(f"last column must be one of {TARGET_KINDS}, got {target_kind!r}")
        target_kind = None
    n_target = 1 if target_kind else 0
    nuisance_names = header[n_lead:len(header) - n_target]
    fvs, targets = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DatasetError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            nums = [float(x) for x in row[2:]]
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        temp, t_refp, v_dd, t_reuse, h_dp, rate, wait = nums[:7]
        nuisance = tuple(zip(nuisance_names, nums[7:len(nums) - n_target]))
        fvs.append(FeatureVector(row[0], t_reuse, h_dp, rate, wait, t_refp, v_dd, temp, row[1], nuisance))
        if target_kind:
            targets.append(nums[-1])
    return fvs, targets, target_kind

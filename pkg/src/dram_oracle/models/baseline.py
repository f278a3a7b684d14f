"""Workload-unaware baseline: one error rate per (device, t_refp, temp) cell.

The cell value is the mean training target in model space, i.e. a geometric
mean for WER. A query whose device was not seen in training falls back to the
mean over all devices at the same (t_refp, temp).
"""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from .common import ModelError


class EmptyCellError(ModelError):
    pass


def fit_baseline(devices, t_refp, temp, y) -> dict[str, np.ndarray]:
    """Cell tables as parallel arrays; ``device`` entries are names."""
    cells: dict[tuple, list[float]] = defaultdict(list)
    fallback: dict[tuple, list[float]] = defaultdict(list)
    for d, t, c, v in zip(devices, t_refp, temp, y):
        cells[(d, float(t), float(c))].append(float(v))
        fallback[(float(t), float(c))].append(float(v))
    if not cells:
        raise EmptyCellError("baseline needs at least one training sample")
    ck = sorted(cells)
    fk = sorted(fallback)
    return {
        "cell_device": np.array([k[0] for k in ck], dtype=object),
        "cell_t_refp": np.array([k[1] for k in ck]),
        "cell_temp": np.array([k[2] for k in ck]),
        "cell_value": np.array([np.mean(cells[k]) for k in ck]),
        "env_t_refp": np.array([k[0] for k in fk]),
        "env_temp": np.array([k[1] for k in fk]),
        "env_value": np.array([np.mean(fallback[k]) for k in fk]),
    }


def baseline_predict(table: dict[str, np.ndarray], devices, t_refp, temp) -> np.ndarray:
    cells = {
        (d, t, c): v
        for d, t, c, v in zip(
            table["cell_device"], table["cell_t_refp"].tolist(), table["cell_temp"].tolist(),
            table["cell_value"].tolist(),
        )
    }
    envs = {
        (t, c): v
        for t, c, v in zip(table["env_t_refp"].tolist(), table["env_temp"].tolist(), table["env_value"].tolist())
    }
    out = []
    for d, t, c in zip(devices, t_refp, temp):
        key = (d, float(t), float(c))
        if key in cells:
            out.append(cells[key])
        elif key[1:] in envs:
            out.append(envs[key[1:]])
        else:
            raise EmptyCellError(f"no training samples at t_refp={t}, temp={c}")
    return np.array(out, dtype=np.float64)

import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dram_oracle import config as cfgio
from dram_oracle.dataset import (
    Dataset,
    DatasetError,
    dataset_from_csv,
    dataset_to_csv,
    header_for,
    read_dataset,
    read_features,
    write_dataset,
)
from dram_oracle.dramsim import SimConfig
from dram_oracle.features import FeatureVector
from dram_oracle.workloads import DEFAULT_DEVICES, DeviceSpec, default_grid, default_workloads

finite = st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False)
name = st.text(alphabet="abcxyz_019", min_size=1, max_size=8)


@st.composite
def datasets(draw):
    nuisance_names = draw(st.lists(st.sampled_from(["n_a", "n_b", "n_c", "n_d"]), unique=True, max_size=4))
    n = draw(st.integers(0, 12))
    kind = draw(st.sampled_from(["wer", "p_ue"]))
    rows = []
    for _ in range(n):
        fv = FeatureVector(
            workload=draw(name), t_reuse=draw(finite), h_dp=draw(finite),
            mem_accesses_per_cycle=draw(finite), wait_cycles_ratio=draw(finite),
            t_refp=draw(finite), v_dd=draw(finite), temp=draw(finite), device=draw(name),
            nuisance=tuple((nn, draw(finite)) for nn in nuisance_names),
        )
        rows.append((fv, draw(st.floats(0, 1))))
    return Dataset(rows, kind)


def _fv(workload="w", device="d", **kw):
    base = dict(t_reuse=0.1, h_dp=2.0, mem_accesses_per_cycle=0.01, wait_cycles_ratio=0.5,
                t_refp=1.0, v_dd=1.428, temp=50.0)
    base.update(kw)
    return FeatureVector(workload=workload, device=device, **base)


@settings(max_examples=500)
@given(datasets())
def test_csv_roundtrip_property(ds):
    back = dataset_from_csv(dataset_to_csv(ds))
    if len(ds):
        assert back == ds
    else:
        assert len(back) == 0 and back.target_kind == ds.target_kind


def test_file_roundtrip_and_header(tmp_path):
    ds = Dataset([(_fv(nuisance=(("z", 1.5),)), 1e-7), (_fv("v", nuisance=(("z", 2.5),)), 0.0)], "wer")
    path = tmp_path / "d.csv"
    write_dataset(ds, path)
    assert read_dataset(path) == ds
    head = open(path).readline().strip().split(",")
    assert head == header_for(ds)
    assert head[:5] == ["workload", "device", "temp", "t_refp", "v_dd"]
    assert head[-1] == "wer" and head[-2] == "z"


def test_read_features_accepts_missing_target():
    ds = Dataset([(_fv(), 0.5)], "p_ue")
    text = dataset_to_csv(ds)
    lines = text.splitlines()
    stripped = "\n".join(",".join(line.split(",")[:-1]) for line in lines) + "\n"
    assert read_features(io.StringIO(stripped)) == ds.features
    assert read_features(io.StringIO(text)) == ds.features


def test_invariants_enforced():
    with pytest.raises(DatasetError):
        Dataset([(_fv(), 1.5)], "wer")
    with pytest.raises(DatasetError):
        Dataset([(_fv(), -0.1)], "p_ue")
    with pytest.raises(DatasetError):
        Dataset([(_fv(), 0.1)], "bogus")
    with pytest.raises(DatasetError):
        Dataset([(_fv(), 0.1), (_fv(nuisance=(("x", 1.0),)), 0.2)], "wer")


def test_workload_index_and_subset():
    ds = Dataset([(_fv("a"), 0.1), (_fv("b"), 0.2), (_fv("a"), 0.3)], "p_ue")
    assert ds.workload_index == {"a": [0, 2], "b": [1]}
    sub = ds.subset([2, 1])
    assert list(sub.targets) == [0.3, 0.2]
    assert list(ds.with_targets([0, 0, 0]).targets) == [0, 0, 0]


def test_malformed_csv_rejected():
    with pytest.raises(DatasetError):
        dataset_from_csv("workload,device\nx,y\n")
    good = dataset_to_csv(Dataset([(_fv(), 0.5)], "p_ue"))
    bad = good.replace("0.5\n", "abc\n")
    with pytest.raises(DatasetError):
        dataset_from_csv(bad)


# -- config files --------------------------------------------------------------


def test_config_roundtrip_and_errors(tmp_path):
    cfg = SimConfig(weak_cell_density=0.01, reuse_mode="min")
    path = tmp_path / "sim.conf"
    cfgio.dump(cfg, path)
    assert cfgio.load(SimConfig, path) == cfg
    text = "# comment\n\nvrt_sigma = 0.2\n"
    assert cfgio.from_pairs(SimConfig, cfgio.parse_pairs(text)).vrt_sigma == 0.2
    with pytest.raises(cfgio.ConfigError, match="unknown"):
        cfgio.from_pairs(SimConfig, {"nope": "1"})
    with pytest.raises(cfgio.ConfigError, match="n_rows"):
        cfgio.from_pairs(SimConfig, {"n_rows": "many"})
    with pytest.raises(cfgio.ConfigError, match="line 1"):
        cfgio.parse_pairs("no equals sign")


# -- default suite -------------------------------------------------------------


def test_default_suite_shape():
    specs = default_workloads()
    assert len(specs) == 13 and len({s.name for s in specs}) == 13
    cfg = SimConfig()
    for s in specs:
        s.validate(cfg.capacity_words)
        assert s.footprint_words * 8 <= cfg.capacity_words * 8
        assert s.n_accesses <= s.n_instructions
    grid = default_grid()
    assert len(grid) == 12
    assert sorted({e.t_refp for e in grid}) == [0.618, 1.173, 1.727, 2.283]
    assert sorted({e.temp for e in grid}) == [50.0, 60.0, 70.0]
    assert len(DEFAULT_DEVICES) == 4
    scales = sorted(d.wer_scale for d in DEFAULT_DEVICES)
    assert scales[-1] / scales[0] == pytest.approx(188.0)


def test_device_spec_text():
    d = DeviceSpec.parse("dimm9:0x10:0.25")
    assert d == DeviceSpec("dimm9", 16, 0.25)
    assert DeviceSpec.parse(d.to_text()) == d
    assert DeviceSpec.parse("x:3").wer_scale == 1.0
    with pytest.raises(ValueError):
        DeviceSpec.parse("bad")
    assert math.isclose(DeviceSpec.parse("a:1:1e-2").wer_scale, 0.01)

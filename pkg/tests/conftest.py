import time
from types import SimpleNamespace

import pytest
from hypothesis import HealthCheck, settings

from dram_oracle.dramsim import SimConfig
from dram_oracle.pipeline import characterize_profiles, profile_trace
from dram_oracle.trace import generate_trace
from dram_oracle.workloads import DEFAULT_DEVICES, default_grid, default_workloads

settings.register_profile(
    "artifact", deadline=None, suppress_health_check=[HealthCheck.too_slow], print_blob=True
)
settings.load_profile("artifact")

CRITERIA: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])


@pytest.fixture(scope="session")
def default_data():
    """The full default grid, built once per session; ``build_seconds`` records its cost.

    Profiles are kept so extra operating points can be labeled without re-profiling.
    """
    t0 = time.perf_counter()
    cfg = SimConfig()
    traces = [generate_trace(s, cfg.capacity_words, cfg.words_per_row) for s in default_workloads()]
    profiles = [profile_trace(t, cfg) for t in traces]
    result = characterize_profiles(profiles, DEFAULT_DEVICES, default_grid(), 10, 0, cfg)
    return SimpleNamespace(
        wer=result.wer, p_ue=result.p_ue, system=result.system, profiles=profiles, config=cfg,
        build_seconds=time.perf_counter() - t0,
    )

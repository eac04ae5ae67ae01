import functools

import pytest

from dynakey.pipeline import RunParams, run_sequence
from dynakey.scene import benchmark_config, generate_scene, oim_config

ACCEPTANCE = []


def record(criterion: int, name: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {name}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append((criterion, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def benchmark_scene(seed=42):
    return generate_scene(benchmark_config(seed))


@functools.lru_cache(maxsize=None)
def oim_scene(seed):
    return generate_scene(oim_config(seed))


@functools.lru_cache(maxsize=None)
def oim_run(seed, use_oim):
    return run_sequence(oim_scene(seed), RunParams(use_oim=use_oim))


@pytest.fixture(scope="session")
def bench():
    return benchmark_scene()

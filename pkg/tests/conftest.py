import numpy as np
import pytest

from ammrg import kernels
from ammrg.pipeline import PipelineConfig, build_banks, run_stage1, run_stage2
from ammrg.synthetic import generate_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["numpy", "numba"])
def kernel_impl(request, monkeypatch):
    """Run a test once per kernel implementation."""
    suffix = request.param
    monkeypatch.setattr(kernels, "patch_means", getattr(kernels, f"patch_means_{suffix}"))
    monkeypatch.setattr(kernels, "lcs_length", getattr(kernels, f"lcs_length_{suffix}"))
    monkeypatch.setattr(kernels, "retrieve_loop", getattr(kernels, f"retrieve_{suffix}"))
    monkeypatch.setattr(kernels, "retrieve_batch", getattr(kernels, f"retrieve_batch_{suffix}"))
    return suffix


@pytest.fixture(scope="session")
def corpus64():
    return generate_corpus(64, seed=0)


@pytest.fixture(scope="session")
def run64(corpus64):
    """Stage 1, both banks and every ablation on the default 64-case corpus."""
    config = PipelineConfig()
    stage1 = run_stage1(corpus64, config)
    visual, report = build_banks(corpus64, stage1, config)
    reports = {a: run_stage2(corpus64, stage1, visual, report, config, a)
               for a in ("none", "visual", "report", "both")}
    return {"config": config, "stage1": stage1, "visual": visual, "report": report, "reports": reports}


_LOG = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_LOG, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LOG, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)

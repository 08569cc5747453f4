"""Shared fixtures: backend warmup and small cohort builders."""

from __future__ import annotations

import numpy as np
import pytest

# one summary line per acceptance criterion, shown after the test table
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from fairphq import backend, synth


@pytest.fixture(scope="session")
def warm_backend() -> str:
    """Resolve the kernel backend and pay any JIT cost up front.

    Timed tests depend on this so compilation never counts against their
    runtime budgets.
    """
    kernels = backend.get_kernels()
    if hasattr(kernels, "warmup"):
        kernels.warmup()
    return kernels.NAME


@pytest.fixture()
def small_cohort():
    """12 records, both groups, tiny feature dims; deterministic."""
    config = synth.CohortConfig(n=12, seed=3, feature_dims=(5, 5, 5))
    return synth.generate_cohort(config)


def random_distribution(rng: np.random.Generator, k: int = 4) -> np.ndarray:
    """A strictly positive probability vector drawn from a Dirichlet-ish cut."""
    raw = rng.random(k) + 1e-3
    return raw / raw.sum()

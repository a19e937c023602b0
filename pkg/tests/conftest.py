"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import numpy as np
import pytest

from hybridcontract.hybrid import HybridState

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    """Store and print one PASS/FAIL line for an acceptance criterion."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_states(sys, n, rng, t=0.0):
    """Draw ``n`` states uniformly from mode boxes, avoiding guard interiors."""
    out = []
    while len(out) < n:
        j = int(rng.integers(len(sys.modes)))
        m = sys.modes[j]
        lo, hi = (np.asarray(v, dtype=float) for v in m.box)
        x = lo + (hi - lo) * rng.random(m.dim)
        s = HybridState(j, x)
        if m.contains(x) and sys.triggered_arc(t, s) is None:
            out.append(s)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

"""Shared fixtures and an independent dense Jordan-Wigner oracle.

The oracle builds mode operators as Kronecker products of 2x2 matrices, with
the first mode as the most significant bit. A fermionic target carries a Z
string over the fermionic modes before it; a bosonic target carries none. It shares no code with the package.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
import pytest

from fermode.fock import SystemLayout, boson, fermion

SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|
Z = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)


def jw_create(kinds: str, j: int) -> np.ndarray:
    """Dense creation operator of mode j; ``kinds`` is a string of 'f'/'b'."""
    factors = []
    for i, kind in enumerate(kinds):
        if i < j:
            factors.append(Z if kind == "f" and kinds[j] == "f" else I2)
        elif i == j:
            factors.append(SIGMA_PLUS)
        else:
            factors.append(I2)
    return reduce(np.kron, factors)


def oracle_parity(kinds: str, positions=None) -> np.ndarray:
    positions = range(len(kinds)) if positions is None else positions
    factors = [Z if (kind == "f" and i in positions) else I2 for i, kind in enumerate(kinds)]
    return reduce(np.kron, factors)


def make_layout(kinds: str, parties: str | None = None) -> SystemLayout:
    parties = parties or "A" * len(kinds)
    return SystemLayout(
        [(fermion if k == "f" else boson)(f"m{i}", p) for i, (k, p) in enumerate(zip(kinds, parties))]
    )


def partial_trace_front(v: np.ndarray, keep: int, total: int) -> np.ndarray:
    """Reduced matrix of the first ``keep`` modes of a dense vector."""
    m = v.reshape(1 << keep, 1 << (total - keep))
    return m @ m.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])

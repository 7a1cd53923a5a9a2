"""Randomized check that the local-parity monotone never decreases on average.

Small layouts (2 to 4 modes split between two parties) are handled densely:
each local Kraus matrix is lifted to the full space through a precomputed
embedding basis built with the sparse operator machinery, so the fermionic
signs come from the same place as everywhere else while the inner loop stays
vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fock import LinearOperator, PureState, SystemLayout, _parity_signs, boson, fermion
from .kraus import random_ssr_blocks
from .resources import MONOTONE_SLACK

# (Alice's mode kinds, Bob's mode kinds); "f" fermion, "b" boson
LAYOUT_CONFIGS = (
    ("f", "f"),
    ("ff", "f"),
    ("f", "ff"),
    ("fb", "f"),
    ("ff", "ff"),
    ("fff", "f"),
    ("f", "fff"),
    ("fb", "ff"),
)


def config_layout(config: tuple[str, str]) -> SystemLayout:
    specs = []
    for party, kinds in zip(("A", "B"), config):
        for j, kind in enumerate(kinds):
            label = f"{party.lower()}{j}"
            specs.append(fermion(label, party) if kind == "f" else boson(label, party))
    return SystemLayout(specs)


@lru_cache(maxsize=None)
def _embedding(config: tuple[str, str], party: str) -> np.ndarray:
    """E[r*d + c] = full matrix of the local unit |r><c| on the party's modes."""
    layout = config_layout(config)
    modes = layout.party_modes(party)
    fermionic = [layout.spec(m).is_fermion for m in modes]
    d = 1 << len(modes)
    out = np.zeros((d * d, layout.dimension, layout.dimension), dtype=complex)
    for r in range(d):
        for c in range(d):
            unit = np.zeros((d, d))
            unit[r, c] = 1.0
            out[r * d + c] = LinearOperator(modes, fermionic, unit, party).to_dense(layout)
    return out


def random_definite_state(layout: SystemLayout, rng: np.random.Generator, sector: int | None = None) -> np.ndarray:
    """Haar-random vector supported on one global parity sector."""
    signs = _parity_signs(np.arange(layout.dimension, dtype=np.int64), layout.fermion_mask)
    if sector is None:
        sector = int(rng.choice([1, -1]))
    support = np.flatnonzero(signs == sector)
    v = np.zeros(layout.dimension, dtype=complex)
    z = rng.standard_normal(len(support)) + 1j * rng.standard_normal(len(support))
    v[support] = z / np.linalg.norm(z)
    return v


def dense_monotone(v: np.ndarray, local_parity: np.ndarray) -> float:
    return float(np.real(np.vdot(v, local_parity * v))) ** 2


def average_after_dense(v: np.ndarray, full_kraus: np.ndarray, local_parity: np.ndarray) -> float:
    """sum_i p_i A(phi_i) with phi_i = M_i v / sqrt(p_i), computed without normalizing."""
    w = full_kraus @ v
    probs = np.sum(np.abs(w) ** 2, axis=1)
    expect = np.real(np.sum(w.conj() * (local_parity * w), axis=1))
    keep = probs > 1e-15
    return float(np.sum(expect[keep] ** 2 / probs[keep]))


@dataclass
class MonotoneFuzzReport:
    n_states: int
    povms_per_state: int
    checks: int = 0
    worst_margin: float = np.inf
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "povms_per_state": self.povms_per_state,
            "checks": self.checks,
            "worst_margin": self.worst_margin,
            "counterexamples": self.counterexamples,
            "passed": self.passed,
        }


def monotone_fuzz(n_states: int, povms_per_state: int, rng, *, classes: str = "mixed", slack: float = MONOTONE_SLACK) -> MonotoneFuzzReport:
    """Random definite-parity states, each hit by many random SSR POVMs on a random party.

    The margin is (average A after) - (A before); a counterexample is any
    margin below ``-slack``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    report = MonotoneFuzzReport(n_states, povms_per_state)
    for s in range(n_states):
        config = LAYOUT_CONFIGS[int(rng.integers(len(LAYOUT_CONFIGS)))]
        layout = config_layout(config)
        v = random_definite_state(layout, rng)
        idx = np.arange(layout.dimension, dtype=np.int64)
        party = str(rng.choice(["A", "B"]))
        modes = layout.party_modes(party)
        fermionic = [layout.spec(m).is_fermion for m in modes]
        basis = _embedding(config, party)
        d2 = basis.shape[0]
        local_fermions = layout.mask(m for m in modes if layout.spec(m).is_fermion)
        parity = _parity_signs(idx, local_fermions).astype(float)
        before = dense_monotone(v, parity)
        for j in range(povms_per_state):
            n = int(rng.integers(2, 9))
            local = random_ssr_blocks(fermionic, n, rng, classes)
            full = np.tensordot(local.reshape(n, d2), basis, axes=(1, 0))
            after = average_after_dense(v, full, parity)
            margin = after - before
            report.checks += 1
            report.worst_margin = min(report.worst_margin, margin)
            if margin < -slack:
                report.counterexamples.append(
                    {"state": s, "povm": j, "config": list(config), "party": party, "before": before, "after": after}
                )
    return report


def state_from_dense(layout: SystemLayout, v: np.ndarray) -> PureState:
    return PureState.from_vector(layout, v)

"""Resource quantifiers: the local-parity monotone, mode entanglement entropy, e-mode tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LayoutError, MonotoneViolation, OperatorError, StateError
from .fock import (
    MixedState,
    PureState,
    apply_operator,
    inner_product,
    reduced_density_matrix,
    trace_distance,
    von_neumann_entropy,
)
from .kraus import KrausSet
from .ssr import ParitySector, local_parity, parity_sector

EMODE_TOL = 1e-9
MONOTONE_SLACK = 1e-9

_PSI_PLUS = np.zeros((4, 4))
_PSI_PLUS[np.ix_([1, 2], [1, 2])] = 0.5


@dataclass(frozen=True)
class ResourceReport:
    monotone_A: float
    entropy_bits: float
    extraction_bound: float


def _require_definite(state: PureState):
    if not isinstance(state, PureState):
        raise StateError("expected a pure state")
    if parity_sector(state) is ParitySector.INDEFINITE:
        raise StateError("state has indefinite global parity")


def siv_monotone(state: PureState, party: str) -> float:
    """A = <phi|P^party|phi>^2."""
    _require_definite(state)
    expectation = inner_product(state, apply_operator(state, local_parity(state.layout, party))).real
    return min(1.0, max(0.0, expectation**2))


def entanglement_entropy(state: PureState, party: str) -> float:
    """Von Neumann entropy (bits) of the party's reduced state."""
    if not isinstance(state, PureState):
        raise StateError("entanglement entropy needs a pure global state")
    rho = reduced_density_matrix(state, state.layout.party_modes(party))
    return max(0.0, von_neumann_entropy(rho))


def emode_extraction_bound(state: PureState, party: str) -> float:
    """Upper bound on the probability of producing a perfect e-mode: 1 - A."""
    return 1.0 - siv_monotone(state, party)


def resource_report(state: PureState, party: str) -> ResourceReport:
    a = siv_monotone(state, party)
    return ResourceReport(a, entanglement_entropy(state, party), 1.0 - a)


def is_perfect_emode(state: PureState | MixedState, mode_a: str, mode_b: str, tol: float = EMODE_TOL) -> bool:
    """True iff the pair holds (|01>+|10>)/sqrt2, in the order (mode_a, mode_b), uncorrelated with the rest."""
    layout = state.layout
    if layout.party_of(mode_a) == layout.party_of(mode_b):
        raise LayoutError(f"{mode_a!r} and {mode_b!r} belong to the same party")
    if not (layout.spec(mode_a).is_fermion and layout.spec(mode_b).is_fermion):
        return False
    rho = reduced_density_matrix(state, (mode_a, mode_b), order=(mode_a, mode_b))
    return bool(trace_distance(rho, _PSI_PLUS) <= tol)


def perfect_emode_pairs(state, party_a: str, party_b: str, tol: float = EMODE_TOL) -> list[tuple[str, str]]:
    """All fermionic (a, b) cross pairs currently holding a perfect e-mode."""
    layout = state.layout
    fa = [m for m in layout.party_modes(party_a) if layout.spec(m).is_fermion]
    fb = [m for m in layout.party_modes(party_b) if layout.spec(m).is_fermion]
    return [(a, b) for a in fa for b in fb if is_perfect_emode(state, a, b, tol)]


def average_monotone_after(state: PureState, kraus: KrausSet, party: str, slack: float = MONOTONE_SLACK):
    """(A before, probability-weighted A after) for a local measurement.

    Raises MonotoneViolation if the average drops by more than ``slack``.
    """
    _require_definite(state)
    if kraus.party != party:
        raise LayoutError(f"Kraus set belongs to {kraus.party!r}, not {party!r}")
    if not kraus.is_complete():
        raise OperatorError("Kraus set is not complete")
    kraus.classes(state.layout)
    before = siv_monotone(state, party)
    after = 0.0
    total = 0.0
    for m in kraus.elements:
        branch = apply_operator(state, m)
        p = branch.norm**2
        total += p
        if p > 1e-15:
            after += p * siv_monotone(branch.normalize(), party)
    if abs(total - 1.0) > 1e-9:
        raise OperatorError(f"branch probabilities sum to {total!r}")
    if after < before - slack:
        raise MonotoneViolation(f"monotone decreased on average: {before!r} -> {after!r}")
    return before, after


def two_mode_entanglement_of_formation(rho: np.ndarray) -> float:
    """Entanglement of formation (bits) of a two-qubit density matrix, via the concurrence."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("expected a 4x4 density matrix")
    yy = np.fliplr(np.diag([-1.0, 1.0, 1.0, -1.0]))
    tilde = yy @ rho.conj() @ yy
    # eigenvalues of rho @ tilde via the Hermitian sqrt(rho) tilde sqrt(rho), which keeps
    # the near-zero ones at machine precision before the square root amplifies them
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    ev = np.sqrt(np.clip(np.linalg.eigvalsh(root @ tilde @ root)[::-1], 0.0, None))
    c = max(0.0, ev[0] - ev[1] - ev[2] - ev[3])
    if c <= 0.0:
        return 0.0
    x = 0.5 * (1.0 + np.sqrt(max(0.0, 1.0 - c * c)))
    if x >= 1.0:
        return 0.0
    return float(-x * np.log2(x) - (1 - x) * np.log2(1 - x))

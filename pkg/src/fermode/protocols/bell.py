"""Two-mode Bell states, the SSR-compatible Bell operators, and local flips."""

from __future__ import annotations

import warnings
from enum import Enum

import numpy as np

from ..errors import LayoutError, OperatorError, SSRViolation
from ..fock import (
    LinearOperator,
    ModeSpec,
    PureState,
    SystemLayout,
    apply_operator,
    embed_local_unitary,
    measure,
    mode_operator,
    reduced_density_matrix,
)
from ..kraus import KrausSet
from ..ssr import check_ssr_operator

SQRT_HALF = 1.0 / np.sqrt(2.0)


class BellKind(str, Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"

    @property
    def parity(self) -> int:
        return 1 if self in (BellKind.PHI_PLUS, BellKind.PHI_MINUS) else -1

    @property
    def eigenvalues(self) -> tuple[int, int]:
        """Joint (O1, O2) eigenvalues."""
        return _EIGENVALUES[self]


_EIGENVALUES = {
    BellKind.PHI_PLUS: (1, 0),
    BellKind.PHI_MINUS: (-1, 0),
    BellKind.PSI_PLUS: (0, 1),
    BellKind.PSI_MINUS: (0, -1),
}

# local basis |n_a n_b>, index 2*n_a + n_b
_VECTORS = {
    BellKind.PHI_PLUS: np.array([1, 0, 0, 1]) * SQRT_HALF,
    BellKind.PHI_MINUS: np.array([1, 0, 0, -1]) * SQRT_HALF,
    BellKind.PSI_PLUS: np.array([0, 1, 1, 0]) * SQRT_HALF,
    BellKind.PSI_MINUS: np.array([0, 1, -1, 0]) * SQRT_HALF,
}

BELL_ORDER = (BellKind.PSI_PLUS, BellKind.PSI_MINUS, BellKind.PHI_PLUS, BellKind.PHI_MINUS)


def bell_vector(kind: BellKind) -> np.ndarray:
    return _VECTORS[BellKind(kind)].astype(complex)


def bell_state(kind: BellKind, mode_a: ModeSpec, mode_b: ModeSpec) -> PureState:
    """The named Bell state on the two-mode layout (mode_a, mode_b)."""
    if mode_a.label == mode_b.label:
        raise LayoutError("Bell state needs two distinct modes")
    layout = SystemLayout([mode_a, mode_b])
    return PureState.from_vector(layout, bell_vector(kind))


def _fermionic_pair(layout: SystemLayout, mode_a: str, mode_b: str):
    if mode_a == mode_b:
        raise LayoutError("Bell operators need two distinct modes")
    for m in (mode_a, mode_b):
        if not layout.spec(m).is_fermion:
            raise LayoutError(f"mode {m!r} is bosonic; Bell operators are fermionic")


def bell_operators(layout: SystemLayout, mode_a: str, mode_b: str) -> tuple[LinearOperator, LinearOperator]:
    """O1 = a^dag b^dag + b a and O2 = a^dag b + b^dag a, built from mode operators."""
    _fermionic_pair(layout, mode_a, mode_b)
    a_dag = mode_operator(layout, mode_a, "create")
    b_dag = mode_operator(layout, mode_b, "create")
    a = a_dag.adjoint()
    b = b_dag.adjoint()
    o1 = (a_dag @ b_dag + b @ a).extended((mode_a, mode_b), (True, True))
    o2 = (a_dag @ b + b_dag @ a).extended((mode_a, mode_b), (True, True))
    party = layout.party_of(mode_a) if layout.party_of(mode_a) == layout.party_of(mode_b) else None
    return o1.with_party(party), o2.with_party(party)


def bell_projectors(layout: SystemLayout, mode_a: str, mode_b: str) -> list[LinearOperator]:
    """Rank-one projectors in BELL_ORDER, on the local basis of (mode_a, mode_b)."""
    _fermionic_pair(layout, mode_a, mode_b)
    party = layout.party_of(mode_a)
    out = []
    for kind in BELL_ORDER:
        v = bell_vector(kind)
        out.append(LinearOperator((mode_a, mode_b), (True, True), np.outer(v, v.conj()), party))
    return out


def bell_povm(layout: SystemLayout, mode_a: str, mode_b: str) -> KrausSet:
    if layout.party_of(mode_a) != layout.party_of(mode_b):
        raise LayoutError("Bell measurement modes must be held by one party")
    return KrausSet(tuple(bell_projectors(layout, mode_a, mode_b)), layout.party_of(mode_a), tuple(k.value for k in BELL_ORDER))


def identify_bell_kind(o1: float, o2: float) -> BellKind:
    for kind, pair in _EIGENVALUES.items():
        if pair == (round(o1), round(o2)):
            return kind
    raise ValueError(f"no Bell state has eigenvalues ({o1}, {o2})")


def bell_measure(state: PureState, mode_a: str, mode_b: str, rng: np.random.Generator):
    """Local Bell measurement; returns (kind, probability, post-measurement state)."""
    layout = state.layout
    if layout.party_of(mode_a) != layout.party_of(mode_b):
        raise LayoutError("Bell measurement on modes held by different parties")
    outcome, prob, post = measure(state, bell_projectors(layout, mode_a, mode_b), rng)
    return BELL_ORDER[outcome], prob, post


def pair_state_kind(state, mode_a: str, mode_b: str, tol: float = 1e-9) -> BellKind | None:
    """Which Bell state the pair is in (as a pure factor), if any."""
    rho = reduced_density_matrix(state, (mode_a, mode_b), order=(mode_a, mode_b))
    for kind in BellKind:
        v = bell_vector(kind)
        if abs((v.conj() @ rho @ v).real - 1.0) <= tol:
            return kind
    return None


def bit_flip_operator(layout: SystemLayout, target: str, ancilla: str) -> LinearOperator:
    """Joint flip of ancilla and target, in the local order (ancilla, target).

    |00> <-> |11>, |01> <-> |10>; preserves the local fermion parity.
    """
    party = layout.party_of(target)
    if layout.party_of(ancilla) != party:
        raise LayoutError("bit flip target and ancilla must be held by one party")
    if target == ancilla:
        raise LayoutError("bit flip needs a separate ancilla mode")
    flip = {"00": "11", "11": "00", "01": "10", "10": "01"}
    op = embed_local_unitary(layout, party, flip, modes=(ancilla, target))
    if not check_ssr_operator(op):
        raise SSRViolation("two-mode flip failed the SSR check")
    return op


def ssr_bit_flip(state: PureState, target_mode: str, ancilla_mode: str) -> PureState:
    """Flip a mode's occupation by flipping a local ancilla along with it."""
    layout = state.layout
    op = bit_flip_operator(layout, target_mode, ancilla_mode)
    rho = reduced_density_matrix(state, (ancilla_mode,))
    if min(rho[0, 0].real, rho[1, 1].real) > 1e-9:
        warnings.warn(f"ancilla {ancilla_mode!r} is not in a definite occupation", stacklevel=2)
    return apply_operator(state, op)


def phase_flip_operator(layout: SystemLayout, mode: str) -> LinearOperator:
    return LinearOperator.diagonal(layout, (mode,), [1.0, -1.0], layout.party_of(mode))


def phase_flip(state: PureState, mode: str) -> PureState:
    return apply_operator(state, phase_flip_operator(state.layout, mode))


def bare_bit_flip_operator(layout: SystemLayout, mode: str) -> LinearOperator:
    """Single-mode |0> <-> |1>; not SSR-compliant for a fermion."""
    m = np.array([[0, 1], [1, 0]], dtype=complex)
    return LinearOperator.on(layout, (mode,), m, layout.party_of(mode))


def ensure_ssr(op: LinearOperator) -> LinearOperator:
    if not check_ssr_operator(op):
        raise SSRViolation(f"operator on {op.support} does not commute with the parity")
    return op


__all__ = [
    "BellKind",
    "BELL_ORDER",
    "bell_vector",
    "bell_state",
    "bell_operators",
    "bell_projectors",
    "bell_povm",
    "bell_measure",
    "identify_bell_kind",
    "pair_state_kind",
    "bit_flip_operator",
    "ssr_bit_flip",
    "phase_flip_operator",
    "phase_flip",
    "bare_bit_flip_operator",
    "ensure_ssr",
    "OperatorError",
]

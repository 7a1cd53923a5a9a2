"""Dense coding with one shared fermionic e-mode and one transmitted mode."""

from __future__ import annotations

import numpy as np

from ..errors import LayoutError, StateError
from ..fock import PureState, SystemLayout, apply_operator, fermion, measure, product_state, spectral_projectors
from ..kraus import KrausSet
from ..locc import LocalUnitary, Povm, ProtocolScript, Transfer, enumerate_branches, run_script
from .bell import BellKind, bell_operators, bell_state, bit_flip_operator, phase_flip_operator

ENCODING = {
    (0, 0): BellKind.PSI_PLUS,
    (0, 1): BellKind.PSI_MINUS,
    (1, 0): BellKind.PHI_PLUS,
    (1, 1): BellKind.PHI_MINUS,
}
DECODING = {kind: bits for bits, kind in ENCODING.items()}

SENDER_MODE = "a"
SENDER_ANCILLA = "a_anc"
RECEIVER_MODE = "b"


def dense_layout() -> SystemLayout:
    return SystemLayout([fermion(SENDER_MODE, "A"), fermion(SENDER_ANCILLA, "A"), fermion(RECEIVER_MODE, "B")])


def dense_initial(layout: SystemLayout | None = None) -> PureState:
    """psi+ on (a, b) and an empty ancilla at Alice."""
    layout = layout or dense_layout()
    return product_state(layout, bell_state(BellKind.PSI_PLUS, layout.spec(SENDER_MODE), layout.spec(RECEIVER_MODE)))


def _check_bits(bits):
    bits = tuple(int(b) for b in bits)
    if bits not in ENCODING:
        raise ValueError(f"expected two bits, got {bits!r}")
    return bits


def encoding_steps(layout: SystemLayout, bits, mode: str, ancilla: str | None) -> list[LocalUnitary]:
    b1, b2 = _check_bits(bits)
    party = layout.party_of(mode)
    steps = []
    if b1:
        if ancilla is None:
            raise StateError("a bit flip needs a local ancilla mode")
        steps.append(LocalUnitary(party, bit_flip_operator(layout, mode, ancilla), "bit flip"))
    if b2:
        steps.append(LocalUnitary(party, phase_flip_operator(layout, mode), "phase flip"))
    return steps


def dense_encode(state: PureState, bits, mode: str = SENDER_MODE, ancilla: str | None = SENDER_ANCILLA) -> PureState:
    """Rotate the shared psi+ into the Bell state named by ``bits`` using local operations only."""
    for step in encoding_steps(state.layout, bits, mode, ancilla):
        state = apply_operator(state, step.op)
    return state


def decoding_povm(layout: SystemLayout, mode_a: str, mode_b: str) -> KrausSet:
    """Joint O1/O2 measurement as four projectors labelled by Bell kind."""
    if layout.party_of(mode_a) != layout.party_of(mode_b):
        raise LayoutError("decoding needs both modes at one party")
    o1, o2 = bell_operators(layout, mode_a, mode_b)
    elements, labels = [], []
    for v1, p1 in spectral_projectors(o1):
        for v2, p2 in spectral_projectors(o2):
            joint = p1 @ p2
            if joint.max_abs() < 1e-12:
                continue
            try:
                kind = next(k for k in BellKind if k.eigenvalues == (round(v1), round(v2)))
            except StopIteration:
                continue
            elements.append(joint.with_party(layout.party_of(mode_a)))
            labels.append(kind.value)
    # (0, 0) joint eigenspace is empty, so the four Bell projectors are complete
    return KrausSet(tuple(elements), layout.party_of(mode_a), tuple(labels))


def dense_decode(state: PureState, mode_a: str, mode_b: str, rng) -> tuple[int, int]:
    """Measure O1 and O2 on two co-located modes and read off the two bits."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    povm = decoding_povm(state.layout, mode_a, mode_b)
    index, _, _ = measure(state, list(povm.elements), rng)
    return DECODING[BellKind(povm.labels[index])]


def dense_coding_script(bits, layout: SystemLayout | None = None) -> ProtocolScript:
    layout = layout or dense_layout()
    steps = encoding_steps(layout, bits, SENDER_MODE, SENDER_ANCILLA)
    steps.append(Transfer(SENDER_MODE, "B"))
    received = layout.with_party(SENDER_MODE, "B")
    steps.append(Povm("B", decoding_povm(received, SENDER_MODE, RECEIVER_MODE), "bell", "decode"))
    return ProtocolScript(tuple(steps), f"dense-code {bits[0]}{bits[1]}")


def decoded_bits(trial) -> tuple[int, int]:
    record = trial.records[-1]
    return DECODING[BellKind(record.label)]


def run_dense_coding(bits, rng):
    trial = run_script(dense_coding_script(bits), dense_initial(), rng)
    return decoded_bits(trial), trial


def dense_coding_branches(bits):
    return enumerate_branches(dense_coding_script(bits), dense_initial())


__all__ = [
    "ENCODING",
    "DECODING",
    "dense_layout",
    "dense_initial",
    "dense_encode",
    "dense_decode",
    "decoding_povm",
    "dense_coding_script",
    "decoded_bits",
    "run_dense_coding",
    "dense_coding_branches",
]

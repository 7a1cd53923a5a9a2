"""Reversible conversion between a bosonic and a fermionic e-mode, catalysed by a fermionic reference.

Each party holds a fermionic ancilla ``f``, half of a fermionic reference pair
``r`` and a bosonic mode. In the local order (f, r, boson) Alice applies

    |001> <-> |110>,   |011> <-> -|100>

and Bob applies |1x0> <-> |0 (1-x) 1>. The reference pair may be phi+, psi+ or
their equal mixture and is returned untouched. The minus sign on Alice's second
swap compensates the fermionic exchange sign picked up when the reference mode
is moved past the ancilla; it does not depend on which reference is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import LayoutError, StateError
from ..fock import (
    LinearOperator,
    MixedState,
    ModeSpec,
    PureState,
    SystemLayout,
    apply_operator,
    basis_state,
    boson,
    embed_local_unitary,
    fermion,
    product_state,
    reduced_density_matrix,
    trace_distance,
)
from ..resources import is_perfect_emode
from ..ssr import check_ssr_operator
from .bell import BellKind, bell_state

CONVERSION_TOL = 1e-9


class ReferenceKind(str, Enum):
    X0 = "x0"
    X1 = "x1"
    MIXED = "mixed"


class Direction(str, Enum):
    BOSON_TO_FERMION = "boson->fermion"
    FERMION_TO_BOSON = "fermion->boson"


@dataclass(frozen=True)
class ConversionModes:
    """Labels of the six modes one conversion acts on."""

    ancilla_a: str = "f_A"
    ref_a: str = "r_A"
    boson_a: str = "bos_A"
    ancilla_b: str = "f_B"
    ref_b: str = "r_B"
    boson_b: str = "bos_B"

    @property
    def alice(self) -> tuple[str, str, str]:
        return (self.ancilla_a, self.ref_a, self.boson_a)

    @property
    def bob(self) -> tuple[str, str, str]:
        return (self.ancilla_b, self.ref_b, self.boson_b)


DEFAULT_MODES = ConversionModes()

_ALICE_MAP = {"001": "110", "110": "001", "011": (-1.0, "100"), "100": (-1.0, "011")}
_BOB_MAP = {"100": "011", "011": "100", "110": "001", "001": "110"}


def conversion_layout(rounds: int = 1) -> tuple[SystemLayout, list[ConversionModes]]:
    """Layout with one shared reference pair and ``rounds`` (ancilla, boson) slots per party."""
    if rounds < 1:
        raise ValueError("need at least one conversion slot")
    suffix = [""] if rounds == 1 else [str(i + 1) for i in range(rounds)]
    slots = [
        ConversionModes(f"f{s}_A", "r_A", f"bos{s}_A", f"f{s}_B", "r_B", f"bos{s}_B") for s in suffix
    ]
    specs: list[ModeSpec] = []
    for party, pick in (("A", lambda m: (m.ancilla_a, m.boson_a)), ("B", lambda m: (m.ancilla_b, m.boson_b))):
        specs.extend(fermion(pick(m)[0], party) for m in slots)
        specs.append(fermion(f"r_{party}", party))
        specs.extend(boson(pick(m)[1], party) for m in slots)
    return SystemLayout(specs), slots


def reference_state(kind: ReferenceKind, mode_a: ModeSpec, mode_b: ModeSpec) -> PureState | MixedState:
    """phi+ for x=0, psi+ for x=1, or the equal mixture of the two."""
    kind = ReferenceKind(kind)
    if mode_a.party == mode_b.party:
        raise LayoutError("reference modes must be held by different parties")
    if kind is ReferenceKind.X0:
        return bell_state(BellKind.PHI_PLUS, mode_a, mode_b)
    if kind is ReferenceKind.X1:
        return bell_state(BellKind.PSI_PLUS, mode_a, mode_b)
    return MixedState(
        [(0.5, bell_state(BellKind.PHI_PLUS, mode_a, mode_b)), (0.5, bell_state(BellKind.PSI_PLUS, mode_a, mode_b))]
    )


def separable_decomposition() -> np.ndarray:
    """Average over w = +-1 of the product projectors (|0>+w|1>)(|0>+w|1>)/2 on |n_a n_b>."""
    rho = np.zeros((4, 4), dtype=complex)
    for w in (1.0, -1.0):
        v = np.kron([1.0, w], [1.0, w]) / 2.0
        rho += 0.5 * np.outer(v, v)
    return rho


def conversion_unitaries(layout: SystemLayout, modes: ConversionModes = DEFAULT_MODES) -> tuple[LinearOperator, LinearOperator]:
    ua = embed_local_unitary(layout, layout.party_of(modes.ancilla_a), _ALICE_MAP, modes=modes.alice)
    ub = embed_local_unitary(layout, layout.party_of(modes.ancilla_b), _BOB_MAP, modes=modes.bob)
    for u in (ua, ub):
        if not check_ssr_operator(u):
            raise StateError("conversion unitary failed the SSR check")
    return ua, ub


def _boson_pair(layout: SystemLayout, modes: ConversionModes) -> PureState:
    sub = SystemLayout([layout.spec(modes.boson_a), layout.spec(modes.boson_b)])
    return PureState.from_vector(sub, np.array([0, 1, 1, 0]) / np.sqrt(2))


def _fermion_pair(layout: SystemLayout, modes: ConversionModes) -> PureState:
    return bell_state(BellKind.PSI_PLUS, layout.spec(modes.ancilla_a), layout.spec(modes.ancilla_b))


def boson_input(layout: SystemLayout, reference: ReferenceKind, slots=(DEFAULT_MODES,)):
    """Reference pair plus, for every slot, a bosonic psi+ and ancillas |0>_A |1>_B."""
    if isinstance(slots, ConversionModes):
        slots = (slots,)
    first = slots[0]
    ref = reference_state(reference, layout.spec(first.ref_a), layout.spec(first.ref_b))
    factors = []
    for m in slots:
        factors.append(_boson_pair(layout, m))
        factors.append(basis_state(SystemLayout([layout.spec(m.ancilla_a), layout.spec(m.ancilla_b)]), "01"))
    if isinstance(ref, MixedState):
        return ref.map_states(lambda r: product_state(layout, r, *factors))
    return product_state(layout, ref, *factors)


def fermion_target(layout: SystemLayout, reference: ReferenceKind, modes: ConversionModes = DEFAULT_MODES):
    """Reference pair, fermionic psi+ on the ancillas and the bosons in |0>_A |1>_B."""
    ref = reference_state(reference, layout.spec(modes.ref_a), layout.spec(modes.ref_b))
    bos = basis_state(SystemLayout([layout.spec(modes.boson_a), layout.spec(modes.boson_b)]), "01")
    pair = _fermion_pair(layout, modes)
    if isinstance(ref, MixedState):
        return ref.map_states(lambda r: product_state(layout, r, pair, bos))
    return product_state(layout, ref, pair, bos)


def _pure_factor(state, labels, target: PureState) -> bool:
    """Whether the reduced state on ``labels`` is the pure ``target`` (so it factors out)."""
    rho = reduced_density_matrix(state, labels, order=labels)
    v = target.to_vector()
    return bool(abs((v.conj() @ rho @ v).real - 1.0) <= CONVERSION_TOL)


def _check_shape(state, direction: Direction, modes: ConversionModes):
    layout = state.layout
    bos_labels = (modes.boson_a, modes.boson_b)
    anc_labels = (modes.ancilla_a, modes.ancilla_b)
    anc_layout = SystemLayout([layout.spec(x) for x in anc_labels])
    bos_layout = SystemLayout([layout.spec(x) for x in bos_labels])
    if direction is Direction.BOSON_TO_FERMION:
        ok = _pure_factor(state, bos_labels, _boson_pair(layout, modes)) and _pure_factor(
            state, anc_labels, basis_state(anc_layout, "01")
        )
    else:
        ok = _pure_factor(state, anc_labels, _fermion_pair(layout, modes)) and _pure_factor(
            state, bos_labels, basis_state(bos_layout, "01")
        )
    if not ok:
        raise StateError(f"input is not in the expected {direction.value} conversion shape")


def convert_boson_fermion(state, direction: Direction | str, modes: ConversionModes = DEFAULT_MODES):
    """Apply the two local conversion unitaries.

    The maps are involutions, so both directions use the same pair of
    unitaries; the direction only selects which input shape is checked.
    Mixed inputs are converted member by member.
    """
    direction = Direction(direction)
    layout = state.layout
    for label in modes.alice[:2] + modes.bob[:2]:
        if not layout.spec(label).is_fermion:
            raise LayoutError(f"mode {label!r} must be fermionic")
    for label in (modes.boson_a, modes.boson_b):
        if layout.spec(label).is_fermion:
            raise LayoutError(f"mode {label!r} must be bosonic")
    _check_shape(state, direction, modes)
    ua, ub = conversion_unitaries(layout, modes)

    def run(s: PureState) -> PureState:
        return apply_operator(apply_operator(s, ua), ub)

    if isinstance(state, MixedState):
        out = state.map_states(run)
    else:
        out = run(state)
    target = Direction.FERMION_TO_BOSON if direction is Direction.BOSON_TO_FERMION else Direction.BOSON_TO_FERMION
    try:
        _check_shape(out, target, modes)
    except StateError:
        raise StateError("reference pair is not invariant under the joint flip; conversion failed") from None
    return out


@dataclass(frozen=True)
class ConversionCheck:
    fidelity: float
    reference_distance: float
    fermion_emode: bool

    @property
    def passed(self) -> bool:
        return self.fidelity >= 1 - CONVERSION_TOL and self.reference_distance <= CONVERSION_TOL and self.fermion_emode


def _members(state):
    return state.ensemble if isinstance(state, MixedState) else ((1.0, state),)


def state_fidelity(a, b) -> float:
    """Ensemble-aligned fidelity: weighted |<a_i|b_i>|^2 over matching members."""
    ma, mb = _members(a), _members(b)
    if len(ma) != len(mb):
        raise StateError("ensembles differ in size")
    total = 0.0
    for (p, x), (_, y) in zip(ma, mb):
        total += p * abs(complex(np.vdot(x.to_vector(), y.to_vector()))) ** 2
    return float(total)


def check_conversion(before, after, reference: ReferenceKind, modes: ConversionModes = DEFAULT_MODES) -> ConversionCheck:
    layout = before.layout
    refs = (modes.ref_a, modes.ref_b)
    dist = trace_distance(
        reduced_density_matrix(before, refs, order=refs), reduced_density_matrix(after, refs, order=refs)
    )
    fid = state_fidelity(fermion_target(layout, reference, modes), after)
    return ConversionCheck(fid, dist, is_perfect_emode(after, modes.ancilla_a, modes.ancilla_b))


__all__ = [
    "ReferenceKind",
    "Direction",
    "ConversionModes",
    "DEFAULT_MODES",
    "conversion_layout",
    "reference_state",
    "separable_decomposition",
    "conversion_unitaries",
    "boson_input",
    "fermion_target",
    "convert_boson_fermion",
    "ConversionCheck",
    "check_conversion",
    "state_fidelity",
]

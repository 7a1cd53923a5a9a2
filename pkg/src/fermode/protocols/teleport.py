"""Teleportation of one fermionic mode through a shared fermionic e-mode.

Alice holds mode ``a`` (entangled with Bob's ``b``) and her half ``e`` of an
e-mode shared with Charlie's ``c``. She Bell-measures (a, e) and sends two
bits; Charlie fixes his mode with a phase flip and/or an ancilla-assisted bit
flip. Afterwards (c, b) carries the original amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..fock import PureState, SystemLayout, fermion, product_state, reduced_density_matrix
from ..locc import ClassicalSend, Conditional, LocalUnitary, Povm, ProtocolScript, TrialReport, enumerate_branches, run_script
from .bell import BELL_ORDER, BellKind, bell_povm, bell_state, bit_flip_operator, phase_flip_operator
from .emode import EModeParams, emode_state

ALICE_MODE = "a"
ALICE_EMODE = "e"
BOB_MODE = "b"
CHARLIE_MODE = "c"
CHARLIE_ANCILLA = "c_anc"

# Charlie's fix-up per Bell outcome on (a, e). Derived from the branch
# algebra with the fermionic exchange sign of pulling Alice's operators to
# the front, which puts a relative minus on the psi+ / phi+ branches.
CORRECTIONS = {
    BellKind.PSI_PLUS: ("phase",),
    BellKind.PSI_MINUS: (),
    BellKind.PHI_PLUS: ("flip", "phase"),
    BellKind.PHI_MINUS: ("flip",),
}


@dataclass(frozen=True)
class TeleportReport:
    kind: BellKind
    probability: float
    fidelity: float
    corrections: tuple
    trial: TrialReport


def teleport_layout() -> SystemLayout:
    return SystemLayout(
        [
            fermion(ALICE_MODE, "A"),
            fermion(ALICE_EMODE, "A"),
            fermion(BOB_MODE, "B"),
            fermion(CHARLIE_MODE, "C"),
            fermion(CHARLIE_ANCILLA, "C"),
        ]
    )


def teleport_initial(params: EModeParams, layout: SystemLayout | None = None) -> PureState:
    """(alpha|0_a 1_b> + beta|1_a 0_b>) (|0_e 1_c> + |1_e 0_c>)/sqrt2 with Charlie's ancilla empty."""
    layout = layout or teleport_layout()
    pair = emode_state(params, layout.spec(ALICE_MODE), layout.spec(BOB_MODE))
    resource = bell_state(BellKind.PSI_PLUS, layout.spec(ALICE_EMODE), layout.spec(CHARLIE_MODE))
    return product_state(layout, pair, resource)


def teleport_target_vector(params: EModeParams) -> np.ndarray:
    """alpha|0_c 1_b> + beta|1_c 0_b> on the local basis |n_b n_c>."""
    v = np.zeros(4, dtype=complex)
    v[0b10] = params.alpha
    v[0b01] = params.beta
    return v


def teleport_fidelity(state, params: EModeParams) -> float:
    rho = reduced_density_matrix(state, (BOB_MODE, CHARLIE_MODE), order=(BOB_MODE, CHARLIE_MODE))
    t = teleport_target_vector(params)
    return float((t.conj() @ rho @ t).real)


def teleport_script(layout: SystemLayout | None = None, corrections=None) -> ProtocolScript:
    layout = layout or teleport_layout()
    corrections = CORRECTIONS if corrections is None else corrections
    flip = bit_flip_operator(layout, CHARLIE_MODE, CHARLIE_ANCILLA)
    phase = phase_flip_operator(layout, CHARLIE_MODE)
    ops = {"flip": LocalUnitary("C", flip, "bit flip"), "phase": LocalUnitary("C", phase, "phase flip")}
    steps = [
        Povm("A", bell_povm(layout, ALICE_MODE, ALICE_EMODE), "bell", "Bell measurement"),
        ClassicalSend("A", "C", "bell"),
    ]
    for i, kind in enumerate(BELL_ORDER):
        fix = tuple(ops[name] for name in corrections[kind])
        if fix:
            steps.append(Conditional("C", "bell", i, fix))
    return ProtocolScript(tuple(steps), "teleport")


def _report(trial: TrialReport, params: EModeParams) -> TeleportReport:
    kind = BELL_ORDER[trial.registers["bell"]]
    return TeleportReport(kind, trial.probability, teleport_fidelity(trial.final_state, params), CORRECTIONS[kind], trial)


def teleport(params: EModeParams, rng) -> TeleportReport:
    """One sampled run of the protocol."""
    if not isinstance(params, EModeParams):
        params = EModeParams(*params)
    trial = run_script(teleport_script(), teleport_initial(params), rng)
    return _report(trial, params)


def teleport_branches(params: EModeParams) -> list[TeleportReport]:
    """All four Bell-outcome branches with their exact probabilities."""
    return [_report(t, params) for t in enumerate_branches(teleport_script(), teleport_initial(params))]

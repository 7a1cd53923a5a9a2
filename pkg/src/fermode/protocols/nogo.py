"""Randomized checks that parity-respecting LOCC cannot convert between boson and fermion e-modes.

Without a fermionic reference, a shared bosonic e-mode never yields a perfect
fermionic e-mode, and a shared fermionic e-mode never yields bosonic
entanglement. Both claims are tested on random scripts: rounds of random
parity-preserving local measurements with classical feedback, explored by
exact branch enumeration.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import SSRViolation
from ..fock import PureState, SystemLayout, basis_state, boson, fermion, product_state, reduced_density_matrix
from ..kraus import sample_random_ssr_povm
from ..locc import ClassicalSend, Conditional, Povm, ProtocolScript, enumerate_branches, party_monotone
from ..resources import perfect_emode_pairs, two_mode_entanglement_of_formation
from ..ssr import classify_local_op
from .bell import BellKind, bell_state

NOGO_TOL = 1e-9
MAX_ROUNDS = 4
ELEMENT_RANGE = (2, 4)


class Start(str, Enum):
    BOSON = "boson"
    FERMION = "fermion"


def nogo_layout() -> SystemLayout:
    """Per party: a fermionic ancilla f, a fermionic mode x and a bosonic mode bos."""
    return SystemLayout(
        [
            fermion("f_A", "A"),
            fermion("x_A", "A"),
            boson("bos_A", "A"),
            fermion("f_B", "B"),
            fermion("x_B", "B"),
            boson("bos_B", "B"),
        ]
    )


def nogo_initial(start: Start | str, layout: SystemLayout | None = None) -> PureState:
    """Boson start: bosonic psi+ with definite fermion occupations. Fermion start: fermionic psi+, bosons empty."""
    start = Start(start)
    layout = layout or nogo_layout()
    sub = lambda *labels: SystemLayout([layout.spec(x) for x in labels])  # noqa: E731
    if start is Start.BOSON:
        pair = PureState.from_vector(sub("bos_A", "bos_B"), np.array([0, 1, 1, 0]) / math.sqrt(2))
        rest = basis_state(sub("f_A", "x_A", "f_B", "x_B"), "0110")
        return product_state(layout, pair, rest)
    pair = bell_state(BellKind.PSI_PLUS, layout.spec("x_A"), layout.spec("x_B"))
    rest = basis_state(sub("f_A", "bos_A", "f_B", "bos_B"), "0000")
    return product_state(layout, pair, rest)


def random_script(layout: SystemLayout, rng: np.random.Generator, rounds: int | None = None) -> ProtocolScript:
    """Tree of random local measurements: each outcome selects a fresh measurement for the next round."""
    if rounds is None:
        rounds = int(rng.integers(1, MAX_ROUNDS + 1))
    first = str(rng.choice(layout.parties))

    def round_steps(t: int, party: str, tag: str) -> tuple:
        n = int(rng.integers(ELEMENT_RANGE[0], ELEMENT_RANGE[1] + 1))
        kraus = sample_random_ssr_povm(layout, party, n, rng, classes="preserve")
        register = f"r{tag}"
        steps = [Povm(party, kraus, register, f"round {t}")]
        if t + 1 < rounds:
            other = next(p for p in layout.parties if p != party)
            steps.append(ClassicalSend(party, other, register))
            for v in range(n):
                steps.append(Conditional(other, register, v, round_steps(t + 1, other, f"{tag}_{v}")))
        return tuple(steps)

    return ProtocolScript(round_steps(0, first, "0"), f"random {rounds} rounds")


@dataclass
class ScriptOutcome:
    """What one script did across all its branches."""

    branches: int
    extraction_probability: float
    min_monotone: float
    max_boson_eof: float
    operator_classes_ok: bool
    problems: list = field(default_factory=list)


def _elements(steps):
    for step in steps:
        if isinstance(step, Povm):
            yield step
        elif isinstance(step, Conditional):
            yield from _elements(step.steps)


def evaluate_script(script: ProtocolScript, initial: PureState) -> ScriptOutcome:
    """Enumerate every branch and measure the quantities both no-go statements constrain."""
    layout = initial.layout
    problems = []
    classes_ok = True
    for step in _elements(script.steps):
        for j, m in enumerate(step.kraus.elements):
            try:
                classify_local_op(m, layout, step.party)
            except SSRViolation as exc:
                classes_ok = False
                problems.append(f"{step.name} element {j}: {exc}")
    extraction = 0.0
    min_a = min(party_monotone(initial, p) for p in layout.parties)
    max_eof = two_mode_entanglement_of_formation(reduced_density_matrix(initial, ("bos_A", "bos_B"), order=("bos_A", "bos_B")))
    branches = enumerate_branches(script, initial)
    for trial in branches:
        state = trial.final_state
        for record in trial.records:
            min_a = min(min_a, *record.monotone_after.values())
        if perfect_emode_pairs(state, "A", "B"):
            extraction += trial.probability
            problems.append(f"perfect fermionic pair on branch {list(trial.outcomes)}")
        rho = reduced_density_matrix(state, ("bos_A", "bos_B"), order=("bos_A", "bos_B"))
        max_eof = max(max_eof, two_mode_entanglement_of_formation(rho))
    return ScriptOutcome(len(branches), extraction, min_a, max_eof, classes_ok, problems)


@dataclass(frozen=True)
class NoConversionReport:
    start: Start
    n_trials: int
    base_seed: int
    max_extraction_probability: float
    min_monotone: float
    max_boson_entanglement: float
    branches: int
    counterexamples: tuple

    @property
    def passed(self) -> bool:
        if self.counterexamples:
            return False
        if self.start is Start.BOSON:
            return self.max_extraction_probability == 0.0 and self.min_monotone >= 1.0 - NOGO_TOL
        return self.max_boson_entanglement <= NOGO_TOL

    def to_dict(self) -> dict:
        return {
            "start": self.start.value,
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "max_extraction_probability": self.max_extraction_probability,
            "min_monotone": self.min_monotone,
            "max_boson_entanglement": self.max_boson_entanglement,
            "branches": self.branches,
            "counterexamples": list(self.counterexamples),
            "passed": self.passed,
        }


def _trial(start: Start, seed: int):
    rng = np.random.default_rng(seed)
    layout = nogo_layout()
    script = random_script(layout, rng)
    outcome = evaluate_script(script, nogo_initial(start, layout))
    bad = outcome.problems or not outcome.operator_classes_ok
    if start is Start.BOSON:
        bad = bad or outcome.min_monotone < 1.0 - NOGO_TOL
    else:
        bad = bad or outcome.max_boson_eof > NOGO_TOL
    return seed, outcome, bad


def no_conversion_experiment(start: Start | str, n_trials: int, rng, *, workers: int = 1) -> NoConversionReport:
    """Run ``n_trials`` random scripts; trial i uses seed ``base ^ i``.

    ``rng`` is an integer base seed or a Generator from which one is drawn.
    Results do not depend on ``workers``.
    """
    start = Start(start)
    if n_trials < 0:
        raise ValueError("n_trials must be non-negative")
    if isinstance(rng, np.random.Generator):
        base = int(rng.integers(0, 2**63))
    else:
        base = int(rng)
    seeds = [base ^ i for i in range(n_trials)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _trial(start, s), seeds))
    else:
        results = [_trial(start, s) for s in seeds]
    max_p = max((o.extraction_probability for _, o, _ in results), default=0.0)
    min_a = min((o.min_monotone for _, o, _ in results), default=1.0 if start is Start.BOSON else 0.0)
    max_e = max((o.max_boson_eof for _, o, _ in results), default=0.0)
    branches = sum(o.branches for _, o, _ in results)
    counter = tuple({"seed": s, "problems": o.problems, "min_monotone": o.min_monotone, "max_boson_eof": o.max_boson_eof} for s, o, bad in results if bad)
    return NoConversionReport(start, n_trials, base, max_p, min_a, max_e, branches, counter)

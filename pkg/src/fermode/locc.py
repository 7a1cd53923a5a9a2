"""Multi-party LOCC scripts: validation, seeded execution and exhaustive branch enumeration.

Every executed local operation must preserve the acting party's fermion
parity. Operations that would flip it are expressed by including an explicit
ancilla mode in the party's block, so the global parity sector never changes.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.sparse as sp

from .errors import LayoutError, ScriptError, SSRViolation, StateError
from .fock import (
    LinearOperator,
    MixedState,
    PureState,
    SystemLayout,
    _finish,
    _parity_signs,
    _sample,
    layout_to_document,
    state_to_document,
)
from .kraus import KrausSet
from .ssr import AncillaSign, ParitySector, check_ssr_operator, classify_local_op, parity_sector

MAX_BRANCHES = 100_000
BRANCH_CUTOFF = 1e-14

__all__ = [
    "LocalUnitary",
    "Povm",
    "ClassicalSend",
    "Conditional",
    "Transfer",
    "ProtocolScript",
    "ScriptProblem",
    "StepRecord",
    "TrialReport",
    "validate_script",
    "run_script",
    "enumerate_branches",
    "script_to_document",
    "script_from_document",
    "dump_script",
    "load_script",
    "party_monotone",
]


@dataclass(frozen=True)
class LocalUnitary:
    party: str
    op: LinearOperator
    name: str = ""


@dataclass(frozen=True)
class Povm:
    party: str
    kraus: KrausSet
    register: str
    name: str = ""


@dataclass(frozen=True)
class ClassicalSend:
    sender: str
    receiver: str
    register: str


@dataclass(frozen=True)
class Conditional:
    """Run ``steps`` if the party's copy of ``register`` equals ``value``."""

    party: str
    register: str
    value: int
    steps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))


@dataclass(frozen=True)
class Transfer:
    """Hand a mode to another party (a quantum channel for one mode)."""

    mode: str
    to_party: str


Step = Union[LocalUnitary, Povm, ClassicalSend, Conditional, Transfer]


@dataclass(frozen=True)
class ProtocolScript:
    steps: tuple = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class ScriptProblem:
    path: str
    message: str

    def __str__(self) -> str:
        return f"step {self.path}: {self.message}"


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


def _check_local(op: LinearOperator, layout: SystemLayout, party: str) -> str | None:
    if party not in layout.parties:
        return f"unknown party {party!r}"
    held = set(layout.party_modes(party))
    missing = [m for m in op.support if m not in layout]
    if missing:
        return f"unknown modes {missing}"
    foreign = [m for m in op.support if m not in held]
    if foreign:
        return f"locality violation: {party!r} does not hold {foreign}"
    for m, f in zip(op.support, op.fermionic):
        if layout.spec(m).is_fermion != f:
            return f"statistics of mode {m!r} disagree with the layout"
    return None


def _check_parity_preserving(op: LinearOperator, layout: SystemLayout, party: str) -> str | None:
    if not check_ssr_operator(op):
        return "SSR violation: operator does not commute with the parity"
    try:
        if classify_local_op(op, layout, party) is not AncillaSign.PRESERVE:
            return "SSR violation: operator flips the local parity; route it through an ancilla"
    except SSRViolation as exc:
        return f"SSR violation: {exc}"
    return None


def validate_script(script: ProtocolScript, layout: SystemLayout) -> list[ScriptProblem]:
    """Static checks: locality, SSR compliance, Kraus completeness, conditional well-formedness."""
    problems: list[ScriptProblem] = []
    knowledge = {p: set() for p in layout.parties}
    outcomes: dict[str, int] = {}
    _validate_steps(script.steps, layout, knowledge, outcomes, problems, "", guards=())
    return problems


def _actor(step):
    if isinstance(step, (LocalUnitary, Povm, Conditional)):
        return step.party
    if isinstance(step, ClassicalSend):
        return step.sender
    return None


def _validate_steps(steps, layout, knowledge, outcomes, problems, prefix, guards):
    nested = bool(guards)
    for i, step in enumerate(steps):
        path = f"{prefix}{i}"

        def bad(msg):
            problems.append(ScriptProblem(path, msg))

        actor = _actor(step)
        unknown = [g for g in guards if actor is not None and g not in knowledge.get(actor, set())]
        if unknown:
            bad(f"{actor!r} acts on a condition it has not received: {unknown}")

        if isinstance(step, LocalUnitary):
            msg = _check_local(step.op, layout, step.party)
            if msg:
                bad(msg)
                continue
            if not step.op.is_unitary():
                bad("operator is not unitary")
            msg = _check_parity_preserving(step.op, layout, step.party)
            if msg:
                bad(msg)
        elif isinstance(step, Povm):
            if step.kraus.party != step.party:
                bad(f"Kraus set belongs to {step.kraus.party!r}, step to {step.party!r}")
            local_ok = True
            for j, m in enumerate(step.kraus.elements):
                msg = _check_local(m, layout, step.party)
                if msg:
                    bad(f"element {j}: {msg}")
                    local_ok = False
            if not local_ok:
                continue
            if not step.kraus.is_complete():
                bad("Kraus completeness violated: sum of M^dagger M is not the identity")
            for j, m in enumerate(step.kraus.elements):
                msg = _check_parity_preserving(m, layout, step.party)
                if msg:
                    bad(f"element {j}: {msg}")
            if step.register in outcomes:
                bad(f"register {step.register!r} written twice")
            outcomes[step.register] = len(step.kraus)
            knowledge.setdefault(step.party, set()).add(step.register)
        elif isinstance(step, ClassicalSend):
            if step.receiver not in layout.parties:
                bad(f"unknown receiver {step.receiver!r}")
            elif step.register not in knowledge.get(step.sender, set()):
                bad(f"{step.sender!r} sends register {step.register!r} it does not hold")
            else:
                knowledge[step.receiver].add(step.register)
        elif isinstance(step, Conditional):
            if step.register not in knowledge.get(step.party, set()):
                bad(f"condition on register {step.register!r} not received by {step.party!r}")
            elif not 0 <= step.value < outcomes.get(step.register, 0):
                bad(f"condition value {step.value} outside the register's outcomes")
            inner_knowledge = {p: set(k) for p, k in knowledge.items()}
            inner_outcomes = dict(outcomes)
            _validate_steps(
                step.steps, layout, inner_knowledge, inner_outcomes, problems, f"{path}.", guards + (step.register,)
            )
        elif isinstance(step, Transfer):
            if nested:
                bad("mode transfer inside a conditional branch is not supported")
            elif step.mode not in layout:
                bad(f"unknown mode {step.mode!r}")
            elif step.to_party not in layout.parties:
                bad(f"unknown party {step.to_party!r}")
            else:
                layout = layout.with_party(step.mode, step.to_party)
        else:
            bad(f"unknown step type {type(step).__name__}")


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def party_monotone(state: PureState, party: str) -> float:
    """<P^party>^2 from the amplitude table directly."""
    mask = state.layout.mask(m for m in state.layout.party_modes(party) if state.layout.spec(m).is_fermion)
    signs = _parity_signs(state.indices, mask)
    return float(np.sum(np.abs(state.amplitudes) ** 2 * signs)) ** 2


@dataclass(frozen=True)
class StepRecord:
    path: str
    kind: str
    party: str | None
    outcome: int | None
    label: str | None
    probability: float
    monotone_before: dict
    monotone_after: dict
    parity: int

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "kind": self.kind,
            "party": self.party,
            "outcome": self.outcome,
            "label": self.label,
            "probability": self.probability,
            "monotone_before": self.monotone_before,
            "monotone_after": self.monotone_after,
            "parity": self.parity,
        }


@dataclass
class TrialReport:
    seed: int | None
    records: list
    final_state: PureState | MixedState
    probability: float
    registers: dict
    outcomes: tuple = ()

    @property
    def layout(self) -> SystemLayout:
        return self.final_state.layout

    def to_dict(self, include_state: bool = True) -> dict:
        out = {
            "seed": self.seed,
            "probability": self.probability,
            "outcomes": list(self.outcomes),
            "registers": dict(self.registers),
            "records": [r.to_dict() for r in self.records],
        }
        if include_state:
            out["final_state"] = state_to_document(self.final_state)
        return out


@dataclass
class _Run:
    members: list
    layout: SystemLayout
    registers: dict
    knowledge: dict
    records: list = field(default_factory=list)
    probability: float = 1.0
    outcomes: tuple = ()
    cached: dict | None = None

    def fork(self) -> _Run:
        return _Run(
            list(self.members),
            self.layout,
            dict(self.registers),
            {p: set(k) for p, k in self.knowledge.items()},
            list(self.records),
            self.probability,
            self.outcomes,
            self.cached,
        )

    def monotones(self) -> dict:
        """Ensemble-averaged A per party; cached until the members change."""
        if self.cached is None:
            self.cached = {
                p: sum(w * party_monotone(s, p) for w, s in self.members) for p in self.layout.parties
            }
        return self.cached

    def sector(self) -> int:
        sec = parity_sector(MixedState(self.members) if len(self.members) > 1 else self.members[0][1])
        return sec.value


def _apply_members(members, op: LinearOperator):
    out = []
    for w, s in members:
        _, new, vals = op._act(s.layout, s.indices, s.amplitudes)
        out.append((w, _finish(s.layout, new, vals, normalize=False)))
    return out


def _start(initial, layout_check=True) -> _Run:
    if isinstance(initial, MixedState):
        members = list(initial.ensemble)
    elif isinstance(initial, PureState):
        if not initial.normalized:
            raise StateError("initial state must be normalized")
        members = [(1.0, initial)]
    else:
        raise TypeError("initial state must be a PureState or MixedState")
    layout = members[0][1].layout
    knowledge = {p: set() for p in layout.parties}
    run = _Run(members, layout, {}, knowledge)
    if run.sector() == ParitySector.INDEFINITE.value:
        raise SSRViolation("initial state has indefinite global parity")
    return run


def _walk(steps, run: _Run, chooser, prefix: str, sector: int, index: int = 0):
    """Depth-first execution; yields finished runs. ``chooser`` picks outcome indices."""
    if index == len(steps):
        yield run
        return
    for child in _step(steps[index], run, chooser, f"{prefix}{index}", sector):
        yield from _walk(steps, child, chooser, prefix, sector, index + 1)


def _record(run, path, kind, party, outcome, label, prob, before, sector):
    run.cached = None
    after = run.monotones()
    current = run.sector()
    if current != sector:
        raise SSRViolation(f"global parity sector changed at step {path}")
    run.records.append(StepRecord(path, kind, party, outcome, label, prob, before, after, current))


def _step(step, run: _Run, chooser, path, sector):
    before = run.monotones()
    if isinstance(step, LocalUnitary):
        run = run.fork()
        run.members = _apply_members(run.members, step.op)
        for i, (w, s) in enumerate(run.members):
            run.members[i] = (w, PureState(s.layout, s.indices, s.amplitudes))
        _record(run, path, "local_unitary", step.party, None, step.name or None, 1.0, before, sector)
        yield run
    elif isinstance(step, Povm):
        branches = []
        for j, m in enumerate(step.kraus.elements):
            out = _apply_members(run.members, m)
            weights = [w * s.norm**2 for w, s in out]
            branches.append((sum(weights), out, weights))
        probs = [b[0] for b in branches]
        total = sum(probs)
        if abs(total - 1.0) > 1e-9:
            raise StateError(f"Kraus branch probabilities sum to {total!r}")
        for j in chooser(probs):
            p, out, weights = branches[j]
            child = run.fork()
            child.members = [
                (wt / p, s.normalize()) for (_, s), wt in zip(out, weights) if wt > BRANCH_CUTOFF * p
            ]
            child.probability = run.probability * p
            child.registers[step.register] = j
            child.knowledge.setdefault(step.party, set()).add(step.register)
            child.outcomes = run.outcomes + (j,)
            _record(child, path, "povm", step.party, j, step.kraus.label(j), p, before, sector)
            yield child
    elif isinstance(step, ClassicalSend):
        run = run.fork()
        if step.register not in run.knowledge.get(step.sender, set()):
            raise ScriptError([ScriptProblem(path, f"{step.sender!r} does not hold {step.register!r}")])
        run.knowledge[step.receiver].add(step.register)
        _record(run, path, "send", step.sender, run.registers[step.register], f"{step.sender}->{step.receiver}:{step.register}", 1.0, before, sector)
        yield run
    elif isinstance(step, Conditional):
        known = step.register in run.knowledge.get(step.party, set())
        if not known:
            raise ScriptError([ScriptProblem(path, f"{step.party!r} has not received {step.register!r}")])
        if run.registers[step.register] == step.value:
            run = run.fork()
            _record(run, path, "conditional", step.party, step.value, "taken", 1.0, before, sector)
            yield from _walk(step.steps, run, chooser, f"{path}.", sector)
        else:
            yield run
    elif isinstance(step, Transfer):
        run = run.fork()
        layout = run.layout.with_party(step.mode, step.to_party)
        run.layout = layout
        run.members = [(w, s.with_layout(layout)) for w, s in run.members]
        _record(run, path, "transfer", step.to_party, None, step.mode, 1.0, before, sector)
        yield run
    else:
        raise ScriptError([ScriptProblem(path, f"unknown step type {type(step).__name__}")])


def _report(run: _Run, seed) -> TrialReport:
    if len(run.members) == 1:
        final = run.members[0][1]
    else:
        final = MixedState(run.members)
    return TrialReport(seed, run.records, final, run.probability, dict(run.registers), run.outcomes)


def _validated(script, initial):
    problems = validate_script(script, initial.layout)
    if problems:
        raise ScriptError(problems)


def run_script(script: ProtocolScript, initial, rng, *, validate: bool = True) -> TrialReport:
    """Execute one sampled branch. ``rng`` is a numpy Generator or an integer seed."""
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    if validate:
        _validated(script, initial)
    run = _start(initial)
    sector = run.sector()

    def chooser(probs):
        return [_sample(probs, rng)]

    (result,) = list(_walk(script.steps, run, chooser, "", sector))
    return _report(result, seed)


def enumerate_branches(script: ProtocolScript, initial, *, validate: bool = True, max_branches: int = MAX_BRANCHES) -> list[TrialReport]:
    """All outcome paths with nonzero probability, in outcome-index order."""
    if validate:
        _validated(script, initial)
    run = _start(initial)
    sector = run.sector()

    def chooser(probs):
        return [j for j, p in enumerate(probs) if p > BRANCH_CUTOFF]

    out = []
    for result in _walk(script.steps, run, chooser, "", sector):
        out.append(_report(result, None))
        if len(out) > max_branches:
            raise ScriptError([ScriptProblem("*", f"more than {max_branches} branches")])
    return out


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

SCRIPT_FORMAT = "fermode-script"
SCRIPT_VERSION = 1


def operator_to_document(op: LinearOperator) -> dict:
    m = op.matrix.tocoo()
    order = np.lexsort((m.col, m.row))
    return {
        "support": list(op.support),
        "fermionic": list(op.fermionic),
        "party": op.party,
        "entries": [
            [int(m.row[i]), int(m.col[i]), float(m.data[i].real), float(m.data[i].imag)] for i in order
        ],
    }


def operator_from_document(doc) -> LinearOperator:
    dim = 1 << len(doc["support"])
    entries = doc["entries"]
    rows = [e[0] for e in entries]
    cols = [e[1] for e in entries]
    vals = [complex(e[2], e[3]) for e in entries]
    m = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
    return LinearOperator(doc["support"], doc["fermionic"], m, doc.get("party"))


def _step_to_document(step) -> dict:
    if isinstance(step, LocalUnitary):
        return {"kind": "local_unitary", "party": step.party, "name": step.name, "operator": operator_to_document(step.op)}
    if isinstance(step, Povm):
        return {
            "kind": "povm",
            "party": step.party,
            "register": step.register,
            "name": step.name,
            "labels": list(step.kraus.labels) if step.kraus.labels is not None else None,
            "elements": [operator_to_document(m) for m in step.kraus.elements],
        }
    if isinstance(step, ClassicalSend):
        return {"kind": "send", "sender": step.sender, "receiver": step.receiver, "register": step.register}
    if isinstance(step, Conditional):
        return {
            "kind": "conditional",
            "party": step.party,
            "register": step.register,
            "value": step.value,
            "steps": [_step_to_document(s) for s in step.steps],
        }
    if isinstance(step, Transfer):
        return {"kind": "transfer", "mode": step.mode, "to_party": step.to_party}
    raise TypeError(f"unknown step type {type(step).__name__}")


def _step_from_document(doc):
    kind = doc["kind"]
    if kind == "local_unitary":
        return LocalUnitary(doc["party"], operator_from_document(doc["operator"]), doc.get("name", ""))
    if kind == "povm":
        elements = tuple(operator_from_document(e) for e in doc["elements"])
        labels = doc.get("labels")
        return Povm(doc["party"], KrausSet(elements, doc["party"], tuple(labels) if labels is not None else None), doc["register"], doc.get("name", ""))
    if kind == "send":
        return ClassicalSend(doc["sender"], doc["receiver"], doc["register"])
    if kind == "conditional":
        return Conditional(doc["party"], doc["register"], int(doc["value"]), tuple(_step_from_document(s) for s in doc["steps"]))
    if kind == "transfer":
        return Transfer(doc["mode"], doc["to_party"])
    raise ValueError(f"unknown step kind {kind!r}")


def script_to_document(script: ProtocolScript, layout: SystemLayout | None = None) -> dict:
    doc = {"format": SCRIPT_FORMAT, "version": SCRIPT_VERSION, "name": script.name}
    if layout is not None:
        doc["layout"] = layout_to_document(layout)
    doc["steps"] = [_step_to_document(s) for s in script.steps]
    return doc


def script_from_document(doc) -> ProtocolScript:
    if doc.get("format") != SCRIPT_FORMAT:
        raise ValueError(f"not a script document: format={doc.get('format')!r}")
    if doc.get("version") != SCRIPT_VERSION:
        raise ValueError(f"unsupported script version {doc.get('version')!r}")
    return ProtocolScript(tuple(_step_from_document(s) for s in doc["steps"]), doc.get("name", ""))


def dump_script(script: ProtocolScript, layout: SystemLayout | None = None) -> str:
    return json.dumps(script_to_document(script, layout), indent=1)


def load_script(text: str) -> ProtocolScript:
    return script_from_document(json.loads(text))

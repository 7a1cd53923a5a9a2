"""Concentration of N partially entangled fermionic pairs into perfect e-modes.

Alice measures her total fermion number m. The surviving state is an equal
superposition over the C(N, m) ways of placing m fermions on her side. She
then keeps the first 2^k of those placements (colex order, k = floor(log2
C(N, m))) with a diagonal index measurement. Finally both parties relabel
their occupation basis so that placement j becomes the binary codeword of j
on the first k pairs. Placements whose codeword weight has the wrong parity
also flip Alice's and Bob's halves of an ancillary psi+, which leaves that
pair unchanged as a whole because every term flips it the same way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from ..errors import LayoutError, StateError
from ..fock import (
    LinearOperator,
    MixedState,
    PureState,
    SystemLayout,
    apply_operator,
    basis_state,
    fermion,
    product_state,
    reduced_density_matrix,
)
from ..kraus import KrausSet
from ..locc import ClassicalSend, Conditional, LocalUnitary, Povm, ProtocolScript, TrialReport, enumerate_branches, run_script
from ..resources import EMODE_TOL, is_perfect_emode
from .bell import BellKind, bell_state
from .emode import EModeParams, emode_state

MIN_COPIES = 2
MAX_COPIES = 12
ANCILLA_KINDS = ("emode", "dual-rail")


@dataclass(frozen=True)
class ConcentrationReport:
    N: int
    m: int
    p_m: float
    k: int
    yield_avg: float
    entropy_target: float
    success: bool = True
    probability: float = 1.0
    extracted: tuple = ()
    ancilla_intact: bool = True
    trial: TrialReport | None = None

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "m": self.m,
            "p_m": self.p_m,
            "k": self.k,
            "yield_avg": self.yield_avg,
            "entropy_target": self.entropy_target,
            "success": self.success,
            "probability": self.probability,
            "extracted": [list(p) for p in self.extracted],
            "ancilla_intact": self.ancilla_intact,
        }


def alice_mode(i: int) -> str:
    return f"a{i + 1}"


def bob_mode(i: int) -> str:
    return f"b{i + 1}"


def _check_n(N: int):
    if not MIN_COPIES <= N <= MAX_COPIES:
        raise ValueError(f"N = {N} outside [{MIN_COPIES}, {MAX_COPIES}]")


def concentration_layout(N: int, ancilla: str = "emode") -> SystemLayout:
    """a1..aN plus the ancilla half e_A at Alice; b1..bN plus e_B at Bob."""
    if ancilla not in ANCILLA_KINDS:
        raise ValueError(f"unknown ancilla kind {ancilla!r}")
    extra = ("e", "e2") if ancilla == "dual-rail" else ("e",)
    specs = [fermion(alice_mode(i), "A") for i in range(N)] + [fermion(f"{x}_A", "A") for x in extra]
    specs += [fermion(bob_mode(i), "B") for i in range(N)] + [fermion(f"{x}_B", "B") for x in extra]
    return SystemLayout(specs)


def ancilla_state(layout: SystemLayout, ancilla: str = "emode") -> PureState:
    """psi+ on (e_A, e_B), or the dual-rail pair |10>_A|01>_B + |01>_A|10>_B."""
    if ancilla == "emode":
        return bell_state(BellKind.PSI_PLUS, layout.spec("e_A"), layout.spec("e_B"))
    sub = SystemLayout([layout.spec(x) for x in ("e_A", "e2_A", "e_B", "e2_B")])
    return PureState.from_amplitudes(sub, {"1001": 1.0, "0110": 1.0})


def concentration_initial(N: int, params: EModeParams, ancilla: str | None = "emode") -> PureState:
    """N copies of the pair state times the ancillary resource (if any)."""
    _check_n(N)
    layout = concentration_layout(N, ancilla or "emode")
    pairs = [emode_state(params, layout.spec(alice_mode(i)), layout.spec(bob_mode(i))) for i in range(N)]
    if ancilla is None:
        return product_state(layout, *pairs)
    return product_state(layout, *pairs, ancilla_state(layout, ancilla))


# --------------------------------------------------------------------------
# combinatorics
# --------------------------------------------------------------------------


def extractable(N: int, m: int) -> int:
    """k = floor(log2 C(N, m))."""
    return math.comb(N, m).bit_length() - 1


def colex_subsets(N: int, m: int) -> list[tuple[int, ...]]:
    """m-subsets of range(N) in colexicographic order (compare largest elements first)."""
    return sorted(combinations(range(N), m), key=lambda s: sum(1 << i for i in s))


def codeword(j: int, k: int) -> tuple[int, ...]:
    """Binary digits of j on k pairs, most significant first."""
    return tuple((j >> (k - 1 - i)) & 1 for i in range(k))


def number_distribution(N: int, params: EModeParams) -> np.ndarray:
    """Binomial law of Alice's fermion count."""
    return np.array([math.comb(N, m) * params.alpha2 ** (N - m) * params.beta2**m for m in range(N + 1)])


def expected_yield(N: int, params: EModeParams) -> float:
    """E[k]/N with k = floor(log2 C(N, m)) for every number outcome m."""
    p = number_distribution(N, params)
    return float(sum(p[m] * extractable(N, m) for m in range(N + 1)) / N)


def realized_yield(N: int, params: EModeParams) -> float:
    """E[k]/N counting only index-measurement successes (probability 2^k / C(N, m))."""
    p = number_distribution(N, params)
    total = 0.0
    for m in range(N + 1):
        k = extractable(N, m)
        total += p[m] * k * (1 << k) / math.comb(N, m)
    return float(total / N)


# --------------------------------------------------------------------------
# local maps
# --------------------------------------------------------------------------


def _local(bits: dict[int, int], size: int) -> int:
    """Local basis index from {position: occupation}, position 0 is the MSB."""
    out = 0
    for pos, v in bits.items():
        if v:
            out |= 1 << (size - 1 - pos)
    return out


def _complete(mapping: dict[int, int], size: int) -> tuple[np.ndarray, np.ndarray]:
    """Extend an injective parity-preserving partial map to a parity-preserving permutation."""
    dim = 1 << size
    used_out = set(mapping.values())
    free_in = {0: [], 1: []}
    free_out = {0: [], 1: []}
    for x in range(dim):
        par = x.bit_count() & 1
        if x not in mapping:
            free_in[par].append(x)
        if x not in used_out:
            free_out[par].append(x)
    full = dict(mapping)
    for par in (0, 1):
        if len(free_in[par]) != len(free_out[par]):
            raise StateError("partial map does not preserve parity")
        full.update(zip(free_in[par], free_out[par]))
    cols = np.fromiter(full.keys(), dtype=np.int64)
    rows = np.fromiter(full.values(), dtype=np.int64)
    return rows, cols


def _operator(support, rows, cols, phases, party) -> LinearOperator:
    size = len(support)
    m = sp.csr_matrix((phases, (rows, cols)), shape=(1 << size, 1 << size), dtype=complex)
    return LinearOperator(tuple(support), (True,) * size, m, party)


@dataclass(frozen=True)
class _Plan:
    k: int
    keep: tuple
    alice_map: dict
    bob_map: dict


def _plan(N: int, m: int) -> _Plan:
    k = extractable(N, m)
    subsets = colex_subsets(N, m)[: 1 << k]
    filler = (N + k) % 2
    size = N + 1
    alice, bob = {}, {}
    for j, s in enumerate(subsets):
        word = codeword(j, k)
        flip = (sum(word) + m) % 2
        occupied = set(s)
        for e in (0, 1):
            src = _local({i: 1 for i in occupied} | {N: e}, size)
            dst = _local({i: word[i] for i in range(k)} | {N: e ^ flip}, size)
            alice[src] = dst
            src_b = _local({i: 1 for i in range(N) if i not in occupied} | {N: e}, size)
            bits_b = {i: 1 - word[i] for i in range(k)} | {N: e ^ flip}
            if filler:
                bits_b[N - 1] = 1
            bob[src_b] = _local(bits_b, size)
    keep = tuple(sum(1 << (N - 1 - i) for i in s) for s in subsets)
    return _Plan(k, keep, alice, bob)


def _supports(N: int):
    return [alice_mode(i) for i in range(N)] + ["e_A"], [bob_mode(i) for i in range(N)] + ["e_B"]


def number_projectors(N: int) -> KrausSet:
    sup_a, _ = _supports(N)
    counts = np.bitwise_count(np.arange(1 << N, dtype=np.int64))
    elements = []
    for m in range(N + 1):
        elements.append(LinearOperator(tuple(sup_a[:N]), (True,) * N, sp.diags((counts == m).astype(complex)), "A"))
    return KrausSet(tuple(elements), "A", tuple(f"m={m}" for m in range(N + 1)))


def index_projectors(N: int, m: int) -> KrausSet | None:
    """Keep the first 2^k colex placements, or None when all C(N, m) are kept."""
    plan = _plan(N, m)
    if len(plan.keep) == math.comb(N, m):
        return None
    diag = np.zeros(1 << N, dtype=complex)
    diag[list(plan.keep)] = 1.0
    sup = tuple(alice_mode(i) for i in range(N))
    counts = np.bitwise_count(np.arange(1 << N, dtype=np.int64))
    rest = ((counts == m) & (diag == 0)).astype(complex)
    # outcomes with other totals have zero weight here; give them to "fail" so the set stays complete
    rest = rest + (counts != m)
    keep = LinearOperator(sup, (True,) * N, sp.diags(diag), "A")
    fail = LinearOperator(sup, (True,) * N, sp.diags(rest), "A")
    return KrausSet((keep, fail), "A", ("keep", "fail"))


@lru_cache(maxsize=64)
def relabel_unitaries(N: int, m: int) -> tuple[LinearOperator, LinearOperator]:
    """Alice's and Bob's relabelling maps for number outcome m, with sign-fixing phases."""
    plan = _plan(N, m)
    sup_a, sup_b = _supports(N)
    size = N + 1
    rows_b, cols_b = _complete(plan.bob_map, size)
    u_b = _operator(sup_b, rows_b, cols_b, np.ones(len(rows_b)), "B")
    rows_a, cols_a = _complete(plan.alice_map, size)
    u_a0 = _operator(sup_a, rows_a, cols_a, np.ones(len(rows_a)), "A")

    # Ideal post-selection state: unit amplitudes, so only fermionic signs remain.
    ideal = EModeParams(np.sqrt(0.5), np.sqrt(0.5))
    state = concentration_initial(N, ideal)
    layout = state.layout
    keep = np.zeros(1 << N, dtype=complex)
    keep[list(plan.keep)] = 1.0
    state = apply_operator(state, LinearOperator(tuple(sup_a[:N]), (True,) * N, sp.diags(keep), "A"))
    src1, idx1, amp1 = u_a0._act(layout, state.indices, state.amplitudes)
    src2, idx2, amp2 = u_b._act(layout, idx1, amp1)
    target = concentration_target(layout, plan.k, N)
    pos = np.searchsorted(target.indices, idx2)
    if np.any(pos >= len(target.indices)) or np.any(target.indices[np.minimum(pos, len(target.indices) - 1)] != idx2):
        raise StateError("relabelling does not land on the target support")
    want = np.sign(target.amplitudes[pos].real)
    got = np.sign(amp2.real)
    # local Alice input of every term, to attach the phase to the right column
    origin = state.indices[src1[src2]]
    shifts = [layout.size - 1 - layout.index(x) for x in sup_a]
    local = np.zeros_like(origin)
    for j, s in enumerate(shifts):
        local |= ((origin >> s) & 1) << (size - 1 - j)
    fix = dict(zip(local.tolist(), (want * got).tolist()))
    phases = np.array([fix.get(int(c), 1.0) for c in cols_a], dtype=complex)
    u_a = _operator(sup_a, rows_a, cols_a, phases, "A")
    return u_a, u_b


def concentration_target(layout: SystemLayout, k: int, N: int) -> PureState:
    """psi+ on (a_i, b_i) for i < k, psi+ on the ancilla, the parity filler on b_N if needed."""
    factors = [bell_state(BellKind.PSI_PLUS, layout.spec(alice_mode(i)), layout.spec(bob_mode(i))) for i in range(k)]
    factors.append(bell_state(BellKind.PSI_PLUS, layout.spec("e_A"), layout.spec("e_B")))
    if (N + k) % 2:
        factors.append(basis_state(SystemLayout([layout.spec(bob_mode(N - 1))]), "1"))
    return product_state(layout, *factors)


# --------------------------------------------------------------------------
# protocol
# --------------------------------------------------------------------------


def concentration_script(N: int) -> ProtocolScript:
    _check_n(N)
    steps = [Povm("A", number_projectors(N), "number", "total number"), ClassicalSend("A", "B", "number")]
    for m in range(N + 1):
        k = extractable(N, m)
        if k == 0:
            continue
        u_a, u_b = relabel_unitaries(N, m)
        relabel = (LocalUnitary("A", u_a, "relabel"),)
        relabel_b = (LocalUnitary("B", u_b, "relabel"),)
        index = index_projectors(N, m)
        if index is None:
            inner = relabel + relabel_b
        else:
            inner = (
                Povm("A", index, "index", "index"),
                ClassicalSend("A", "B", "index"),
                Conditional("A", "index", 0, relabel),
                Conditional("B", "index", 0, relabel_b),
            )
        steps.append(Conditional("A", "number", m, inner))
    return ProtocolScript(tuple(steps), f"concentrate N={N}")


def ancilla_intact(state, ancilla: str = "emode", tol: float = EMODE_TOL) -> bool:
    """Whether the ancillary resource is still in its initial pure state."""
    target = ancilla_state(state.layout, ancilla)
    labels = target.layout.labels
    rho = reduced_density_matrix(state, labels, order=labels)
    v = target.to_vector()
    return bool(abs((v.conj() @ rho @ v).real - 1.0) <= tol)


def _report(trial: TrialReport, N: int, params: EModeParams, ancilla: str) -> ConcentrationReport:
    m = trial.registers["number"]
    p_m = float(trial.records[0].probability)
    k = extractable(N, m)
    success = trial.registers.get("index", 0) == 0
    state = trial.final_state
    pairs = tuple((alice_mode(i), bob_mode(i)) for i in range(k)) if success else ()
    extracted = tuple(p for p in pairs if is_perfect_emode(state, *p))
    return ConcentrationReport(
        N=N,
        m=m,
        p_m=p_m,
        k=k if success else 0,
        yield_avg=expected_yield(N, params),
        entropy_target=params.entropy(),
        success=success,
        probability=trial.probability,
        extracted=extracted,
        ancilla_intact=ancilla_intact(state, ancilla),
        trial=trial,
    )


def _params(params) -> EModeParams:
    return params if isinstance(params, EModeParams) else EModeParams(*params)


def concentrate(N: int, params: EModeParams, rng, *, ancilla: str | None = "emode") -> ConcentrationReport:
    """One sampled run; needs a pre-shared ancillary pair."""
    _check_n(N)
    if ancilla is None:
        raise StateError("concentration needs an ancillary e-mode to absorb parity deficits")
    params = _params(params)
    trial = run_script(concentration_script(N), concentration_initial(N, params, ancilla), rng)
    return _report(trial, N, params, ancilla)


def concentration_branches(N: int, params: EModeParams, *, ancilla: str = "emode") -> list[ConcentrationReport]:
    """Every branch with its exact probability."""
    _check_n(N)
    params = _params(params)
    trials = enumerate_branches(concentration_script(N), concentration_initial(N, params, ancilla))
    return [_report(t, N, params, ancilla) for t in trials]


def measured_distribution(reports: list[ConcentrationReport], N: int) -> np.ndarray:
    """Probability of each number outcome, summed over index branches."""
    out = np.zeros(N + 1)
    for r in reports:
        out[r.m] += r.probability
    return out


def enumerated_yield(reports: list[ConcentrationReport], N: int) -> float:
    """E[k]/N from the branch list, with k = floor(log2 C(N, m)) per number outcome."""
    dist = measured_distribution(reports, N)
    return float(sum(dist[m] * extractable(N, m) for m in range(N + 1)) / N)


# --------------------------------------------------------------------------
# producing the ancilla
# --------------------------------------------------------------------------


def bootstrap_layout(n_pairs: int) -> SystemLayout:
    return SystemLayout(
        [fermion(alice_mode(i), "A") for i in range(n_pairs)] + [fermion(bob_mode(i), "B") for i in range(n_pairs)]
    )


def bootstrap_script(n_pairs: int) -> ProtocolScript:
    """Number measurements on consecutive pairs of copies until one gives m = 1."""
    if n_pairs < 2:
        raise ValueError("the bootstrap needs at least two pairs")
    attempts = n_pairs // 2
    steps: list = []
    for t in range(attempts):
        sup = (alice_mode(2 * t), alice_mode(2 * t + 1))
        counts = np.bitwise_count(np.arange(4))
        elements = tuple(LinearOperator(sup, (True, True), sp.diags((counts == m).astype(complex)), "A") for m in range(3))
        step = Povm("A", KrausSet(elements, "A", ("m=0", "m=1", "m=2")), f"attempt{t}", f"attempt {t}")
        steps.append(step)
    # later attempts only matter if the earlier ones failed; run them all and keep the first success
    return ProtocolScript(tuple(steps), f"bootstrap n={n_pairs}")


def bootstrap_initial(n_pairs: int, params: EModeParams) -> PureState:
    layout = bootstrap_layout(n_pairs)
    return product_state(
        layout, *[emode_state(params, layout.spec(alice_mode(i)), layout.spec(bob_mode(i))) for i in range(n_pairs)]
    )


def _first_success(trial: TrialReport, n_pairs: int) -> int | None:
    for t in range(n_pairs // 2):
        if trial.registers.get(f"attempt{t}") == 1:
            return t
    return None


@dataclass(frozen=True)
class BootstrapResult:
    success: bool
    state: PureState
    attempt: int | None
    probability: float

    def __iter__(self):
        return iter((self.success, self.state))

    @property
    def resource_modes(self) -> tuple[str, str, str, str] | None:
        """(a, a', b, b') of the successful attempt."""
        if self.attempt is None:
            return None
        t = self.attempt
        return (alice_mode(2 * t), alice_mode(2 * t + 1), bob_mode(2 * t), bob_mode(2 * t + 1))


def bootstrap_emode(n_pairs: int, params: EModeParams, rng) -> BootstrapResult:
    """Try to produce the two-branch resource; unpacks as (success flag, post state)."""
    params = _params(params)
    trial = run_script(bootstrap_script(n_pairs), bootstrap_initial(n_pairs, params), rng)
    t = _first_success(trial, n_pairs)
    return BootstrapResult(t is not None, trial.final_state, t, trial.probability)


def bootstrap_success_probability(n_pairs: int, params: EModeParams) -> float:
    """Exact probability that some attempt yields m = 1, by branch enumeration."""
    params = _params(params)
    total = 0.0
    for trial in enumerate_branches(bootstrap_script(n_pairs), bootstrap_initial(n_pairs, params)):
        if _first_success(trial, n_pairs) is not None:
            total += trial.probability
    return total


def dual_rail_resource(result: BootstrapResult) -> PureState:
    """Reduced pure state of the successful attempt's four modes."""
    if not result.success:
        raise StateError("bootstrap did not succeed")
    modes = result.resource_modes
    rho = reduced_density_matrix(result.state, modes, order=modes)
    sub = SystemLayout([result.state.layout.spec(x) for x in modes])
    mixed = MixedState.from_density_matrix(sub, rho)
    if len(mixed) != 1:
        raise StateError("resource modes are entangled with the rest")
    return mixed.states[0]


# --------------------------------------------------------------------------
# optimal two-copy extraction (attains the 1 - A bound)
# --------------------------------------------------------------------------


def filter_kraus(layout: SystemLayout, mode: str, params: EModeParams) -> KrausSet:
    """Diagonal local filter equalizing the two amplitudes of one pair.

    Outcome 0 scales the larger-amplitude occupation down so the pair becomes
    psi+ (after the relative phase is removed); outcome 1 is the failure.
    """
    a, b = abs(params.alpha), abs(params.beta)
    theta = np.angle(params.beta) - np.angle(params.alpha)
    if a >= b:
        ratio = b / a if a > 0 else 0.0
        good = np.array([ratio, np.exp(-1j * theta)])
        bad = np.array([np.sqrt(max(0.0, 1 - ratio**2)), 0.0])
    else:
        ratio = a / b
        good = np.array([1.0, ratio * np.exp(-1j * theta)])
        bad = np.array([0.0, np.sqrt(max(0.0, 1 - ratio**2))])
    party = layout.party_of(mode)
    passed = LinearOperator.diagonal(layout, (mode,), good, party)
    if np.abs(bad).max() <= 1e-15:
        return KrausSet((passed,), party, ("pass",))
    return KrausSet((passed, LinearOperator.diagonal(layout, (mode,), bad, party)), party, ("pass", "fail"))


def filter_script(n_pairs: int, params: EModeParams) -> ProtocolScript:
    layout = bootstrap_layout(n_pairs)
    steps = [Povm("A", filter_kraus(layout, alice_mode(i), params), f"filter{i}", f"filter {i}") for i in range(n_pairs)]
    return ProtocolScript(tuple(steps), f"filter n={n_pairs}")


def filter_extraction_probability(n_pairs: int, params: EModeParams) -> float:
    """Exact probability that at least one pair ends as a perfect e-mode."""
    params = _params(params)
    total = 0.0
    for trial in enumerate_branches(filter_script(n_pairs, params), bootstrap_initial(n_pairs, params)):
        pairs = [(alice_mode(i), bob_mode(i)) for i in range(n_pairs)]
        if any(is_perfect_emode(trial.final_state, *p) for p in pairs):
            total += trial.probability
    return total


def check_n_range(N: int):
    """Public guard used by the CLI."""
    try:
        _check_n(N)
    except ValueError as exc:
        raise LayoutError(str(exc)) from None

"""Occupation-number states and operators for mixed fermion/boson mode systems.

A basis vector is an integer whose bits are the mode occupancies, with the
first layout mode in the most significant bit. For fermions a basis vector is
the ordered product of creation operators (layout order) applied to the
vacuum, so operator matrix elements carry the Jordan-Wigner sign of the
occupied fermionic modes that precede the acted-on mode. Bosonic modes never
contribute signs and are capped at occupancy one.

Operators are stored locally: a sparse matrix over the occupation basis of
their support modes, in the order the support is declared. Embedding into a
full layout is done on the fly, with the sign bookkeeping needed when the
support is not contiguous or not declared in layout order.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import LayoutError, OperatorError, StateError

NORM_TOL = 1e-10
PRUNE_TOL = 1e-14
MAX_DENSE_MODES = 14
DENSE_RDM_LIMIT = 1 << 20

__all__ = [
    "Statistics",
    "ModeSpec",
    "SystemLayout",
    "PureState",
    "MixedState",
    "LinearOperator",
    "Measurement",
    "build_layout",
    "fermion",
    "boson",
    "basis_state",
    "superpose",
    "product_state",
    "apply_mode_op",
    "mode_operator",
    "number_operator",
    "inner_product",
    "fidelity",
    "apply_operator",
    "embed_local_unitary",
    "reduced_density_matrix",
    "reduced_density",
    "trace_distance",
    "von_neumann_entropy",
    "spectral_projectors",
    "measure",
    "add_ancilla",
    "transfer_mode",
    "state_to_document",
    "state_from_document",
    "dump_state",
    "load_state",
]


class Statistics(str, Enum):
    FERMION = "fermion"
    BOSON = "boson"


@dataclass(frozen=True)
class ModeSpec:
    """One local mode: its label, particle statistics and owning party."""

    label: str
    statistics: Statistics
    party: str

    def __post_init__(self):
        if not isinstance(self.label, str) or not self.label:
            raise LayoutError(f"mode label must be a nonempty string, got {self.label!r}")
        if not isinstance(self.party, str) or not self.party:
            raise LayoutError(f"mode {self.label!r} needs a nonempty party")
        try:
            object.__setattr__(self, "statistics", Statistics(self.statistics))
        except ValueError:
            raise LayoutError(f"unknown statistics {self.statistics!r}") from None

    @property
    def is_fermion(self) -> bool:
        return self.statistics is Statistics.FERMION


def fermion(label: str, party: str) -> ModeSpec:
    return ModeSpec(label, Statistics.FERMION, party)


def boson(label: str, party: str) -> ModeSpec:
    return ModeSpec(label, Statistics.BOSON, party)


Occupation = Union[str, Sequence[int], Mapping[str, int]]


class SystemLayout:
    """Immutable ordered registry of modes.

    The order is the Jordan-Wigner order and also fixes basis enumeration:
    occupancies read as bits, first mode most significant.
    """

    __slots__ = ("_modes", "_index", "_fermion_mask")

    def __init__(self, modes: Iterable[ModeSpec]):
        modes = tuple(m if isinstance(m, ModeSpec) else ModeSpec(*m) for m in modes)
        if not modes:
            raise LayoutError("a layout needs at least one mode")
        index = {}
        for i, m in enumerate(modes):
            if m.label in index:
                raise LayoutError(f"duplicate mode label {m.label!r}")
            index[m.label] = i
        self._modes = modes
        self._index = index
        n = len(modes)
        self._fermion_mask = sum(1 << (n - 1 - i) for i, m in enumerate(modes) if m.is_fermion)

    @property
    def modes(self) -> tuple[ModeSpec, ...]:
        return self._modes

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self._modes)

    @property
    def size(self) -> int:
        return len(self._modes)

    def __len__(self) -> int:
        return len(self._modes)

    @property
    def dimension(self) -> int:
        return 1 << len(self._modes)

    @property
    def parties(self) -> tuple[str, ...]:
        seen = []
        for m in self._modes:
            if m.party not in seen:
                seen.append(m.party)
        return tuple(seen)

    def __contains__(self, label) -> bool:
        return label in self._index

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise LayoutError(f"unknown mode {label!r}") from None

    def spec(self, label: str) -> ModeSpec:
        return self._modes[self.index(label)]

    def shift(self, label: str) -> int:
        return len(self._modes) - 1 - self.index(label)

    def bit(self, label: str) -> int:
        return 1 << self.shift(label)

    def mask(self, labels: Iterable[str]) -> int:
        out = 0
        for label in labels:
            out |= self.bit(label)
        return out

    @property
    def fermion_mask(self) -> int:
        return self._fermion_mask

    def party_modes(self, party: str) -> tuple[str, ...]:
        labels = tuple(m.label for m in self._modes if m.party == party)
        if not labels:
            raise LayoutError(f"unknown party {party!r}")
        return labels

    def party_of(self, label: str) -> str:
        return self.spec(label).party

    def occupation_index(self, occupation: Occupation) -> int:
        n = len(self._modes)
        if isinstance(occupation, Mapping):
            values = [0] * n
            for label, v in occupation.items():
                values[self.index(label)] = v
        elif isinstance(occupation, str):
            values = [int(c) if c in "01" else c for c in occupation]
        else:
            values = list(occupation)
        if len(values) != n:
            raise StateError(f"occupation has {len(values)} entries, layout has {n} modes")
        out = 0
        for v in values:
            if v not in (0, 1):
                raise StateError(f"occupancy {v!r} outside {{0, 1}}")
            out = (out << 1) | int(v)
        return out

    def occupation(self, index: int) -> tuple[int, ...]:
        n = len(self._modes)
        return tuple((int(index) >> (n - 1 - i)) & 1 for i in range(n))

    def bitstring(self, index: int) -> str:
        return format(int(index), f"0{len(self._modes)}b")

    def with_party(self, label: str, party: str) -> SystemLayout:
        i = self.index(label)
        m = self._modes[i]
        modes = list(self._modes)
        modes[i] = ModeSpec(m.label, m.statistics, party)
        return SystemLayout(modes)

    def inserted(self, spec: ModeSpec, position: int) -> SystemLayout:
        modes = list(self._modes)
        modes.insert(position, spec)
        return SystemLayout(modes)

    def sublayout(self, labels: Iterable[str]) -> SystemLayout:
        """Layout of the given modes, kept in the given order."""
        return SystemLayout(self.spec(label) for label in labels)

    def ordered(self, labels: Iterable[str]) -> tuple[str, ...]:
        """The given labels sorted into layout order."""
        return tuple(sorted(set(labels), key=self.index))

    def __eq__(self, other) -> bool:
        return isinstance(other, SystemLayout) and self._modes == other._modes

    def __hash__(self) -> int:
        return hash(self._modes)

    def __repr__(self) -> str:
        body = ", ".join(
            f"{m.label}:{'f' if m.is_fermion else 'b'}@{m.party}" for m in self._modes
        )
        return f"SystemLayout({body})"


def build_layout(specs: Iterable[ModeSpec | tuple]) -> SystemLayout:
    return SystemLayout(specs)


def _mini_layout(labels: Sequence[str], fermionic: Sequence[bool]) -> SystemLayout:
    return SystemLayout(
        ModeSpec(label, Statistics.FERMION if f else Statistics.BOSON, "_")
        for label, f in zip(labels, fermionic)
    )


# --------------------------------------------------------------------------
# bit-level kernels
# --------------------------------------------------------------------------


def _popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x)


def _parity_signs(idx: np.ndarray, mask: int) -> np.ndarray:
    return 1 - 2 * (_popcount(idx & mask) & 1).astype(np.int64)


def _reorder(idx, fermionic, perm):
    """Relabel basis ints between two orderings of the same modes.

    ``idx`` are occupations in a source order of k modes (first MSB);
    ``perm[j]`` is the target position of source mode j. Returns target-order
    ints and the sign from reordering the creation string.
    """
    idx = np.asarray(idx, dtype=np.int64)
    k = len(perm)
    bits = [(idx >> (k - 1 - j)) & 1 for j in range(k)]
    out = np.zeros_like(idx)
    for j in range(k):
        out |= bits[j] << (k - 1 - perm[j])
    parity = np.zeros_like(idx)
    for i in range(k):
        if not fermionic[i]:
            continue
        for j in range(i + 1, k):
            if fermionic[j] and perm[i] > perm[j]:
                parity ^= bits[i] & bits[j]
    return out, 1 - 2 * parity


def _string_signs(idx, n, fermion_mask, positions, support_mask):
    """Sign for pulling the support modes' creation operators to the front.

    Counts occupied fermionic non-support modes preceding each occupied
    fermionic support mode.
    """
    full = (1 << n) - 1
    outside = fermion_mask & ~support_mask
    parity = np.zeros_like(idx)
    for p in positions:
        shift = n - 1 - p
        if not (fermion_mask >> shift) & 1:
            continue
        earlier = outside & full & ~((1 << (shift + 1)) - 1)
        if earlier == 0:
            continue
        parity ^= ((idx >> shift) & 1) & (_popcount(idx & earlier) & 1).astype(np.int64)
    return 1 - 2 * parity


def _merge(idx: np.ndarray, amp: np.ndarray):
    if len(idx) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex)
    uniq, inv = np.unique(idx, return_inverse=True)
    re = np.bincount(inv, weights=amp.real, minlength=len(uniq))
    im = np.bincount(inv, weights=amp.imag, minlength=len(uniq))
    summed = re + 1j * im
    keep = np.abs(summed) >= PRUNE_TOL
    return uniq[keep].astype(np.int64), summed[keep]


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------


class LinearOperator:
    """Operator on the occupation basis of a set of support modes.

    ``matrix`` is a sparse 2^k x 2^k matrix in the local basis of ``support``
    taken in declared order (first support mode most significant). Local basis
    vectors are ordered products of the support modes' creation operators, so
    the same physical operator written with a different support order differs
    only by reordering signs. Outside the support the operator is the
    identity.
    """

    __slots__ = ("_support", "_fermionic", "_matrix", "_party", "_cache")

    def __init__(self, support, fermionic, matrix, party=None):
        support = tuple(support)
        fermionic = tuple(bool(f) for f in fermionic)
        if len(set(support)) != len(support):
            raise OperatorError(f"repeated mode in support {support}")
        if len(fermionic) != len(support):
            raise OperatorError("need one statistics flag per support mode")
        dim = 1 << len(support)
        m = sp.csr_matrix(matrix, dtype=complex)
        if m.shape != (dim, dim):
            raise OperatorError(
                f"matrix shape {m.shape} does not match support of {len(support)} modes"
            )
        m.eliminate_zeros()
        self._support = support
        self._fermionic = fermionic
        self._matrix = m
        self._party = party
        self._cache = {}

    # construction helpers

    @classmethod
    def on(cls, layout: SystemLayout, support, matrix, party=None) -> LinearOperator:
        support = tuple(support)
        fermionic = [layout.spec(label).is_fermion for label in support]
        return cls(support, fermionic, matrix, party)

    @classmethod
    def identity(cls, layout: SystemLayout, support=(), party=None) -> LinearOperator:
        support = tuple(support)
        return cls.on(layout, support, sp.identity(1 << len(support), dtype=complex), party)

    @classmethod
    def diagonal(cls, layout, support, values, party=None) -> LinearOperator:
        return cls.on(layout, support, sp.diags(np.asarray(values, dtype=complex)), party)

    # accessors

    @property
    def support(self) -> tuple[str, ...]:
        return self._support

    @property
    def fermionic(self) -> tuple[bool, ...]:
        return self._fermionic

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._matrix

    @property
    def party(self):
        return self._party

    @property
    def local_dimension(self) -> int:
        return 1 << len(self._support)

    def local_dense(self) -> np.ndarray:
        return self._matrix.toarray()

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rows, cols, values) of the nonzero local matrix elements, cached."""
        hit = self._cache.get("coo")
        if hit is None:
            m = self._matrix.tocoo()
            hit = (m.row.astype(np.int64), m.col.astype(np.int64), m.data)
            self._cache["coo"] = hit
        return hit

    def with_party(self, party) -> LinearOperator:
        return LinearOperator(self._support, self._fermionic, self._matrix, party)

    def local_parity_signs(self) -> np.ndarray:
        """(-1)^(fermions in support) for each local basis vector."""
        k = len(self._support)
        mask = sum(1 << (k - 1 - j) for j, f in enumerate(self._fermionic) if f)
        return _parity_signs(np.arange(1 << k, dtype=np.int64), mask)

    # embedding

    def _localized(self, layout: SystemLayout):
        """Support positions (layout order) and the CSC matrix in that order."""
        try:
            positions = [layout.index(label) for label in self._support]
        except LayoutError:
            raise LayoutError(
                f"operator support {self._support} not contained in {layout!r}"
            ) from None
        for label, f in zip(self._support, self._fermionic):
            if layout.spec(label).is_fermion != f:
                raise LayoutError(f"statistics of mode {label!r} disagree with the layout")
        key = tuple(positions)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        order = sorted(range(len(positions)), key=positions.__getitem__)
        perm = [0] * len(order)
        for target, source in enumerate(order):
            perm[source] = target
        if perm == sorted(perm):
            local = self._matrix.tocsc()
        else:
            row, col, data = self.entries()
            rows, rs = _reorder(row, self._fermionic, perm)
            cols, cs = _reorder(col, self._fermionic, perm)
            local = sp.csc_matrix(
                (data * rs * cs, (rows, cols)), shape=self._matrix.shape, dtype=complex
            )
        local.sort_indices()
        result = (sorted(positions), local)
        self._cache[key] = result
        return result

    def _act(self, layout: SystemLayout, idx: np.ndarray, amp: np.ndarray):
        """Apply to basis components; returns (source position, target idx, amplitude)."""
        positions, local = self._localized(layout)
        n = layout.size
        k = len(positions)
        shifts = [n - 1 - p for p in positions]
        support_mask = sum(1 << s for s in shifts)
        loc = np.zeros_like(idx)
        for j, s in enumerate(shifts):
            loc |= ((idx >> s) & 1) << (k - 1 - j)
        rest = idx & ~support_mask
        indptr, rows_all, data_all = local.indptr, local.indices, local.data
        starts = indptr[loc]
        counts = indptr[loc + 1] - starts
        total = int(counts.sum())
        src = np.repeat(np.arange(len(idx)), counts)
        if total == 0:
            return src, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        pick = np.repeat(starts, counts) + offsets
        rows = rows_all[pick].astype(np.int64)
        vals = data_all[pick]
        new = rest[src]
        for j, s in enumerate(shifts):
            new = new | (((rows >> (k - 1 - j)) & 1) << s)
        fm = layout.fermion_mask
        signs = _string_signs(idx[src], n, fm, positions, support_mask) * _string_signs(
            new, n, fm, positions, support_mask
        )
        return src, new, amp[src] * vals * signs

    def to_dense(self, layout: SystemLayout) -> np.ndarray:
        """Full 2^n matrix on ``layout`` (small layouts only)."""
        if layout.size > MAX_DENSE_MODES:
            raise OperatorError(f"dense view limited to {MAX_DENSE_MODES} modes")
        dim = layout.dimension
        idx = np.arange(dim, dtype=np.int64)
        src, new, vals = self._act(layout, idx, np.ones(dim, dtype=complex))
        out = np.zeros((dim, dim), dtype=complex)
        np.add.at(out, (new, src), vals)
        return out

    def extended(self, labels: Sequence[str], fermionic: Sequence[bool]) -> LinearOperator:
        """Same operator written on a larger support, in the given order."""
        labels = tuple(labels)
        if not set(self._support) <= set(labels):
            raise OperatorError("extension must contain the current support")
        if labels == self._support:
            return self
        mini = _mini_layout(labels, fermionic)
        dim = mini.dimension
        idx = np.arange(dim, dtype=np.int64)
        src, new, vals = self._act(mini, idx, np.ones(dim, dtype=complex))
        m = sp.csr_matrix((vals, (new, src)), shape=(dim, dim), dtype=complex)
        return LinearOperator(labels, fermionic, m, self._party)

    def _aligned(self, other: LinearOperator):
        labels = list(self._support)
        flags = list(self._fermionic)
        for label, f in zip(other._support, other._fermionic):
            if label in labels:
                if flags[labels.index(label)] != f:
                    raise OperatorError(f"statistics of mode {label!r} disagree")
            else:
                labels.append(label)
                flags.append(f)
        return self.extended(labels, flags), other.extended(labels, flags)

    def _party_join(self, other):
        return self._party if self._party == other._party else None

    # algebra

    def adjoint(self) -> LinearOperator:
        return LinearOperator(self._support, self._fermionic, self._matrix.conj().T, self._party)

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            a, b = self._aligned(other)
            return LinearOperator(a._support, a._fermionic, a._matrix @ b._matrix, self._party_join(other))
        if isinstance(other, PureState):
            return apply_operator(other, self)
        return NotImplemented

    def __add__(self, other):
        if not isinstance(other, LinearOperator):
            return NotImplemented
        a, b = self._aligned(other)
        return LinearOperator(a._support, a._fermionic, a._matrix + b._matrix, self._party_join(other))

    def __sub__(self, other):
        if not isinstance(other, LinearOperator):
            return NotImplemented
        return self + (-1) * other

    def __mul__(self, scalar):
        if isinstance(scalar, LinearOperator):
            return NotImplemented
        return LinearOperator(self._support, self._fermionic, self._matrix * complex(scalar), self._party)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def max_abs(self) -> float:
        return float(np.abs(self._matrix.data).max()) if self._matrix.nnz else 0.0

    def is_hermitian(self, tol: float = NORM_TOL) -> bool:
        d = self._matrix - self._matrix.conj().T
        return d.nnz == 0 or float(np.abs(d.data).max()) <= tol

    def is_unitary(self, tol: float = NORM_TOL) -> bool:
        d = self._matrix.conj().T @ self._matrix - sp.identity(self.local_dimension, dtype=complex)
        d = sp.csr_matrix(d)
        return d.nnz == 0 or float(np.abs(d.data).max()) <= tol

    def allclose(self, other: LinearOperator, tol: float = NORM_TOL) -> bool:
        return (self - other).max_abs() <= tol

    def __repr__(self) -> str:
        party = f", party={self._party!r}" if self._party else ""
        return f"LinearOperator(support={self._support}, nnz={self._matrix.nnz}{party})"


def mode_operator(layout: SystemLayout, mode: str, kind: str) -> LinearOperator:
    """Creation (``"create"``) or annihilation (``"annihilate"``) operator of one mode."""
    spec = layout.spec(mode)
    if kind in ("create", "dagger", "+"):
        m = [[0, 0], [1, 0]]
    elif kind in ("annihilate", "-"):
        m = [[0, 1], [0, 0]]
    else:
        raise OperatorError(f"unknown mode operator kind {kind!r}")
    return LinearOperator((mode,), (spec.is_fermion,), np.array(m, dtype=complex), spec.party)


def number_operator(layout: SystemLayout, mode: str) -> LinearOperator:
    spec = layout.spec(mode)
    return LinearOperator((mode,), (spec.is_fermion,), np.diag([0.0, 1.0]).astype(complex), spec.party)


# --------------------------------------------------------------------------
# states
# --------------------------------------------------------------------------


class PureState:
    """Sparse amplitude table over occupation basis vectors of a layout.

    States are immutable. ``normalized`` is False only for explicitly
    unnormalized results (mode operators, projections); such states may also
    be the zero vector.
    """

    __slots__ = ("_layout", "_idx", "_amp", "_normalized")

    def __init__(self, layout: SystemLayout, indices, amplitudes, *, normalized: bool = True):
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if idx.shape != amp.shape:
            raise StateError("indices and amplitudes differ in length")
        if len(idx) and (idx.min() < 0 or idx.max() >= layout.dimension):
            raise StateError("basis index outside the layout")
        idx, amp = _merge(idx, amp)
        if normalized:
            norm = math.sqrt(float(np.sum(np.abs(amp) ** 2)))
            if abs(norm - 1.0) > NORM_TOL:
                raise StateError(f"state norm {norm!r} is not 1; flag it unnormalized")
        idx.setflags(write=False)
        amp.setflags(write=False)
        self._layout = layout
        self._idx = idx
        self._amp = amp
        self._normalized = bool(normalized)

    @classmethod
    def from_amplitudes(cls, layout, amplitudes: Mapping, *, normalize: bool = True) -> PureState:
        idx = [layout.occupation_index(k) if not isinstance(k, (int, np.integer)) else int(k) for k in amplitudes]
        amp = np.array(list(amplitudes.values()), dtype=complex)
        return _finish(layout, np.array(idx, dtype=np.int64), amp, normalize=normalize)

    @classmethod
    def from_vector(cls, layout, vector, *, normalize: bool = True) -> PureState:
        vector = np.asarray(vector, dtype=complex).reshape(-1)
        if len(vector) != layout.dimension:
            raise StateError("vector length does not match the layout dimension")
        nz = np.flatnonzero(np.abs(vector) >= PRUNE_TOL)
        return _finish(layout, nz.astype(np.int64), vector[nz], normalize=normalize)

    @property
    def layout(self) -> SystemLayout:
        return self._layout

    @property
    def indices(self) -> np.ndarray:
        return self._idx

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amp

    @property
    def normalized(self) -> bool:
        return self._normalized

    @property
    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self._amp) ** 2)))

    @property
    def is_zero(self) -> bool:
        return len(self._idx) == 0

    def __len__(self) -> int:
        return len(self._idx)

    def normalize(self) -> PureState:
        norm = self.norm
        if norm < PRUNE_TOL:
            raise StateError("cannot normalize the zero vector")
        return PureState(self._layout, self._idx, self._amp / norm)

    def amplitude(self, occupation: Occupation | int) -> complex:
        i = occupation if isinstance(occupation, (int, np.integer)) else self._layout.occupation_index(occupation)
        pos = np.searchsorted(self._idx, i)
        if pos < len(self._idx) and self._idx[pos] == i:
            return complex(self._amp[pos])
        return 0j

    def items(self):
        for i, a in zip(self._idx, self._amp):
            yield self._layout.occupation(int(i)), complex(a)

    def to_dict(self) -> dict[str, complex]:
        return {self._layout.bitstring(int(i)): complex(a) for i, a in zip(self._idx, self._amp)}

    def to_vector(self) -> np.ndarray:
        if self._layout.size > 20:
            raise StateError("dense vector limited to 20 modes")
        v = np.zeros(self._layout.dimension, dtype=complex)
        v[self._idx] = self._amp
        return v

    def with_layout(self, layout: SystemLayout) -> PureState:
        """Same amplitudes on a layout that differs only in party attribution."""
        if layout.labels != self._layout.labels or any(
            a.statistics != b.statistics for a, b in zip(layout.modes, self._layout.modes)
        ):
            raise LayoutError("layouts differ in more than party attribution")
        return PureState(layout, self._idx, self._amp, normalized=self._normalized)

    def parity_weights(self, mask: int | None = None) -> tuple[float, float]:
        """Probability weight in the even and odd sectors of ``mask`` (default: all fermions)."""
        mask = self._layout.fermion_mask if mask is None else mask
        p = np.abs(self._amp) ** 2
        odd = (_popcount(self._idx & mask) & 1).astype(bool)
        return float(p[~odd].sum()), float(p[odd].sum())

    def __repr__(self) -> str:
        terms = [
            f"({a.real:+.4g}{a.imag:+.4g}j)|{self._layout.bitstring(int(i))}>"
            for i, a in zip(self._idx[:8], self._amp[:8])
        ]
        more = " + ..." if len(self._idx) > 8 else ""
        return f"PureState[{', '.join(self._layout.labels)}]: " + " + ".join(terms) + more


def _finish(layout, idx, amp, *, normalize: bool) -> PureState:
    idx, amp = _merge(np.asarray(idx, dtype=np.int64), np.asarray(amp, dtype=complex))
    norm = math.sqrt(float(np.sum(np.abs(amp) ** 2)))
    if normalize:
        if norm < PRUNE_TOL:
            raise StateError("superposition is the zero vector")
        return PureState(layout, idx, amp / norm)
    return PureState(layout, idx, amp, normalized=abs(norm - 1.0) <= NORM_TOL)


def basis_state(layout: SystemLayout, occupation: Occupation) -> PureState:
    return PureState(layout, [layout.occupation_index(occupation)], [1.0])


def _check_same_layout(states):
    layouts = {s.layout for s in states}
    if len(layouts) != 1:
        raise LayoutError("states live on different layouts")
    return layouts.pop()


def superpose(terms: Iterable[tuple[complex, PureState]]) -> PureState:
    """Normalized linear combination of states on one layout."""
    terms = list(terms)
    if not terms:
        raise StateError("empty superposition")
    layout = _check_same_layout([s for _, s in terms])
    idx = np.concatenate([s.indices for _, s in terms])
    amp = np.concatenate([complex(c) * s.amplitudes for c, s in terms])
    return _finish(layout, idx, amp, normalize=True)


def product_state(layout: SystemLayout, *factors: PureState) -> PureState:
    """Combine states on disjoint mode sets into one state on ``layout``.

    The result is the product of the factors' creation polynomials, first
    factor leftmost, acting on the vacuum. Modes not covered by any factor are
    empty.
    """
    order: list[str] = []
    idx = np.zeros(1, dtype=np.int64)
    amp = np.ones(1, dtype=complex)
    for f in factors:
        labels = f.layout.labels
        if set(labels) & set(order):
            raise LayoutError("product factors overlap")
        for label in labels:
            if layout.spec(label).statistics != f.layout.spec(label).statistics:
                raise LayoutError(f"statistics of mode {label!r} disagree")
        k = len(labels)
        idx = ((idx[:, None] << k) | f.indices[None, :]).reshape(-1)
        amp = (amp[:, None] * f.amplitudes[None, :]).reshape(-1)
        order.extend(labels)
    rest = [label for label in layout.labels if label not in order]
    order.extend(rest)
    idx = idx << len(rest)
    perm = [layout.index(label) for label in order]
    fermionic = [layout.spec(label).is_fermion for label in order]
    new, signs = _reorder(idx, fermionic, perm)
    return _finish(layout, new, amp * signs, normalize=False)


def apply_operator(state: PureState, op: LinearOperator, *, renormalize: bool = False) -> PureState:
    """Matrix-vector product; the result is renormalized only on request."""
    if not isinstance(op, LinearOperator):
        raise OperatorError(f"expected a LinearOperator, got {type(op).__name__}")
    if op.local_dimension > state.layout.dimension:
        raise OperatorError("operator dimension exceeds the state's layout")
    _, new, vals = op._act(state.layout, state.indices, state.amplitudes)
    if renormalize:
        return _finish(state.layout, new, vals, normalize=True)
    return _finish(state.layout, new, vals, normalize=False)


def apply_mode_op(state: PureState, mode: str, kind: str) -> PureState:
    """a_k^dagger or a_k on a state; the result is not renormalized and may be zero."""
    return apply_operator(state, mode_operator(state.layout, mode, kind))


def inner_product(a: PureState, b: PureState) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.layout.labels != b.layout.labels:
        raise LayoutError("inner product of states on different layouts")
    common, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True, return_indices=True)
    return complex(np.sum(np.conj(a.amplitudes[ia]) * b.amplitudes[ib]))


def fidelity(a: PureState, b: PureState) -> float:
    """|<a|b>|^2 for normalized states; insensitive to global phase."""
    return abs(inner_product(a, b)) ** 2


def embed_local_unitary(
    layout: SystemLayout,
    party: str,
    basis_map: Mapping,
    modes: Sequence[str] | None = None,
    *,
    fill_identity: bool = True,
) -> LinearOperator:
    """Unitary acting on a party's modes as a phased permutation of local basis vectors.

    ``basis_map`` sends a local occupation (bitstring or tuple over ``modes``,
    default all of the party's modes in layout order) to either a target
    occupation or a ``(phase, target)`` pair. Unlisted inputs are fixed points
    unless ``fill_identity`` is False, in which case the map must be total.
    The local basis follows the order of ``modes``.
    """
    party_modes = layout.party_modes(party)
    modes = tuple(party_modes if modes is None else modes)
    foreign = [m for m in modes if layout.party_of(m) != party]
    if foreign:
        raise OperatorError(f"map mixes parties: {foreign} are not held by {party!r}")
    k = len(modes)
    sub = layout.sublayout(modes)
    dim = 1 << k
    targets = {}
    for src, dst in basis_map.items():
        if isinstance(dst, tuple) and len(dst) == 2 and isinstance(dst[1], (str, tuple, list, Mapping)):
            phase, dst = dst
        else:
            phase = 1.0
        phase = complex(phase)
        if abs(abs(phase) - 1.0) > NORM_TOL:
            raise OperatorError(f"phase {phase!r} is not unimodular")
        s = sub.occupation_index(src)
        if s in targets:
            raise OperatorError(f"input {src!r} listed twice")
        targets[s] = (sub.occupation_index(dst), phase)
    if fill_identity:
        for s in range(dim):
            targets.setdefault(s, (s, 1.0))
    if len(targets) != dim:
        raise OperatorError("basis map is not total on the local basis")
    images = [t for t, _ in targets.values()]
    if len(set(images)) != dim:
        raise OperatorError("basis map is not a bijection")
    cols = np.array(list(targets.keys()))
    rows = np.array(images)
    vals = np.array([p for _, p in targets.values()], dtype=complex)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    op = LinearOperator(modes, [layout.spec(x).is_fermion for x in modes], m, party)
    if not op.is_unitary():
        raise OperatorError("embedded map is not unitary")
    return op


# --------------------------------------------------------------------------
# mixed states and reduced states
# --------------------------------------------------------------------------


class MixedState:
    """Probabilistic ensemble of pure states on one layout."""

    __slots__ = ("_ensemble", "_layout")

    def __init__(self, ensemble: Iterable[tuple[float, PureState]]):
        ensemble = [(float(p), s) for p, s in ensemble]
        if not ensemble:
            raise StateError("empty ensemble")
        if any(p < 0 for p, _ in ensemble):
            raise StateError("negative ensemble probability")
        total = sum(p for p, _ in ensemble)
        if abs(total - 1.0) > NORM_TOL:
            raise StateError(f"ensemble probabilities sum to {total!r}")
        for _, s in ensemble:
            if not s.normalized:
                raise StateError("ensemble members must be normalized")
        self._layout = _check_same_layout([s for _, s in ensemble])
        self._ensemble = tuple(ensemble)

    @classmethod
    def pure(cls, state: PureState) -> MixedState:
        return cls([(1.0, state)])

    @classmethod
    def from_density_matrix(cls, layout: SystemLayout, rho: np.ndarray, tol: float = 1e-12) -> MixedState:
        """Eigen-ensemble of a density matrix, diagonalized per parity block when possible."""
        rho = np.asarray(rho, dtype=complex)
        rho = 0.5 * (rho + rho.conj().T)
        dim = layout.dimension
        signs = _parity_signs(np.arange(dim, dtype=np.int64), layout.fermion_mask)
        even = signs == 1
        blocks = [np.flatnonzero(even), np.flatnonzero(~even)]
        if np.abs(rho[np.ix_(blocks[0], blocks[1])]).max(initial=0.0) > NORM_TOL:
            blocks = [np.arange(dim)]
        members = []
        for b in blocks:
            if len(b) == 0:
                continue
            w, v = np.linalg.eigh(rho[np.ix_(b, b)])
            for val, vec in zip(w, v.T):
                if val > tol:
                    full = np.zeros(dim, dtype=complex)
                    full[b] = vec
                    members.append((float(val), PureState.from_vector(layout, full)))
        total = sum(p for p, _ in members)
        return cls([(p / total, s) for p, s in members])

    @property
    def layout(self) -> SystemLayout:
        return self._layout

    @property
    def ensemble(self) -> tuple[tuple[float, PureState], ...]:
        return self._ensemble

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(p for p, _ in self._ensemble)

    @property
    def states(self) -> tuple[PureState, ...]:
        return tuple(s for _, s in self._ensemble)

    def __len__(self) -> int:
        return len(self._ensemble)

    def density_matrix(self) -> np.ndarray:
        if self._layout.size > MAX_DENSE_MODES:
            raise StateError(f"dense density matrix limited to {MAX_DENSE_MODES} modes")
        rho = np.zeros((self._layout.dimension,) * 2, dtype=complex)
        for p, s in self._ensemble:
            v = s.to_vector()
            rho += p * np.outer(v, v.conj())
        return rho

    def map_states(self, fn) -> MixedState:
        return MixedState([(p, fn(s)) for p, s in self._ensemble])

    def __repr__(self) -> str:
        return f"MixedState({len(self._ensemble)} members on [{', '.join(self._layout.labels)}])"


StateLike = Union[PureState, MixedState]


def _members(state: StateLike):
    if isinstance(state, MixedState):
        return state.ensemble
    return ((1.0, state),)


def reduced_density_matrix(state: StateLike, modes: Iterable[str], order: Sequence[str] | None = None) -> np.ndarray:
    """Partial trace onto ``modes``.

    The matrix is indexed by the local basis of ``order`` (default: layout
    order). Amplitudes are first rewritten with the kept modes' creation
    operators pulled to the front, so expectation values of any operator
    supported on ``modes`` agree with the global state.
    """
    layout = state.layout
    keep = layout.ordered(modes)
    if not keep:
        raise LayoutError("reduced density over an empty mode set")
    if order is not None and set(order) != set(keep):
        raise LayoutError("order must list exactly the kept modes")
    positions = [layout.index(label) for label in keep]
    n = layout.size
    k = len(keep)
    shifts = [n - 1 - p for p in positions]
    support_mask = sum(1 << s for s in shifts)
    dim = 1 << k
    rho = np.zeros((dim, dim), dtype=complex)
    for p, s in _members(state):
        if p == 0.0 or s.is_zero:
            continue
        idx = s.indices
        amp = s.amplitudes * _string_signs(idx, n, layout.fermion_mask, positions, support_mask)
        loc = np.zeros_like(idx)
        for j, sh in enumerate(shifts):
            loc |= ((idx >> sh) & 1) << (k - 1 - j)
        rest = idx & ~support_mask
        _, col = np.unique(rest, return_inverse=True)
        width = int(col.max()) + 1
        if dim * width <= DENSE_RDM_LIMIT:
            psi = np.zeros((dim, width), dtype=complex)
            psi[loc, col] = amp
            rho += p * (psi @ psi.conj().T)
        else:
            psi = sp.csr_matrix((amp, (loc, col)), shape=(dim, width))
            rho += p * (psi @ psi.conj().T).toarray()
    if order is not None and tuple(order) != keep:
        fermionic = [layout.spec(label).is_fermion for label in keep]
        perm = [list(order).index(label) for label in keep]
        src = np.arange(dim, dtype=np.int64)
        tgt, sg = _reorder(src, fermionic, perm)
        out = np.zeros_like(rho)
        out[np.ix_(tgt, tgt)] = rho * np.outer(sg, sg)
        rho = out
    return rho


def reduced_density(state: StateLike, modes: Iterable[str]) -> MixedState:
    """Reduced state on ``modes`` as an eigen-ensemble over the kept modes' layout."""
    layout = state.layout
    keep = layout.ordered(modes)
    rho = reduced_density_matrix(state, keep)
    return MixedState.from_density_matrix(layout.sublayout(keep), rho)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    d = np.asarray(rho) - np.asarray(sigma)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


def von_neumann_entropy(rho: np.ndarray, base: float = 2.0) -> float:
    w = np.linalg.eigvalsh(0.5 * (rho + np.conj(rho).T))
    w = w[w > 1e-15]
    return float(-(w * np.log(w)).sum() / np.log(base))


# --------------------------------------------------------------------------
# measurement
# --------------------------------------------------------------------------


class Measurement(NamedTuple):
    outcome: object
    probability: float
    state: PureState


def spectral_projectors(op: LinearOperator, tol: float = 1e-8) -> list[tuple[float, LinearOperator]]:
    """Eigenvalue/projector pairs of a Hermitian operator, ascending eigenvalues."""
    if not op.is_hermitian():
        raise OperatorError("observable is not Hermitian")
    w, v = np.linalg.eigh(op.local_dense())
    groups: list[list[int]] = []
    for i, val in enumerate(w):
        if groups and abs(val - w[groups[-1][0]]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    out = []
    for g in groups:
        vecs = v[:, g]
        proj = vecs @ vecs.conj().T
        proj[np.abs(proj) < PRUNE_TOL] = 0.0
        value = float(np.mean(w[g]))
        if abs(value - round(value)) < tol:
            value = float(round(value)) + 0.0
        out.append((value, LinearOperator(op.support, op.fermionic, proj, op.party)))
    return out


def _check_projectors(projectors: Sequence[LinearOperator], tol: float = NORM_TOL):
    total = projectors[0] * 0.0
    for p in projectors:
        total = total + p
        if not p.is_hermitian(tol) or not (p @ p).allclose(p, tol):
            raise OperatorError("measurement element is not an orthogonal projector")
    ident = LinearOperator(total.support, total.fermionic, sp.identity(total.local_dimension))
    if not total.allclose(ident, tol):
        raise OperatorError("projector set is not complete")


def _sample(probabilities: Sequence[float], rng: np.random.Generator) -> int:
    u = rng.random() * sum(probabilities)
    acc = 0.0
    last = 0
    for i, p in enumerate(probabilities):
        if p <= 0.0:
            continue
        last = i
        acc += p
        if u < acc:
            return i
    return last


def measure(state: PureState, observable, rng: np.random.Generator) -> Measurement:
    """Projective measurement with Born-rule sampling.

    ``observable`` is a Hermitian LinearOperator (outcome = eigenvalue) or a
    complete list of orthogonal projectors (outcome = index).
    """
    if isinstance(observable, LinearOperator):
        pairs = spectral_projectors(observable)
        labels = [v for v, _ in pairs]
        projectors = [p for _, p in pairs]
    else:
        projectors = list(observable)
        _check_projectors(projectors)
        labels = list(range(len(projectors)))
    branches = [apply_operator(state, p) for p in projectors]
    probs = [b.norm ** 2 for b in branches]
    total = sum(probs)
    if abs(total - 1.0) > 1e-9:
        raise StateError(f"outcome probabilities sum to {total!r}")
    i = _sample(probs, rng)
    return Measurement(labels[i], probs[i], branches[i].normalize())


# --------------------------------------------------------------------------
# layout surgery
# --------------------------------------------------------------------------


def add_ancilla(state: StateLike, spec: ModeSpec, occupancy: int = 0):
    """Append a fresh mode at the end of its party's block, in a definite occupation.

    An occupied fermionic ancilla is created by applying its creation
    operator to the whole state, so moving it to its layout position costs
    the sign of the fermions it passes. Inserting the bit without that sign
    would apply the local parity of the modes in front of it, which is a
    visible change on the remaining modes. Returns ``(layout, state)``.
    """
    if occupancy not in (0, 1):
        raise StateError(f"ancilla occupancy {occupancy!r} outside {{0, 1}}")
    layout = state.layout
    if spec.label in layout:
        raise LayoutError(f"mode label {spec.label!r} already in use")
    members = [i for i, m in enumerate(layout.modes) if m.party == spec.party]
    position = members[-1] + 1 if members else layout.size
    new_layout = layout.inserted(spec, position)
    below = layout.size - position

    def lift(s: PureState) -> PureState:
        idx = s.indices
        low = idx & ((1 << below) - 1)
        high = (idx >> below) << (below + 1)
        new = high | (occupancy << below) | low
        amp = s.amplitudes
        if occupancy and spec.is_fermion:
            front = layout.fermion_mask & ~((1 << below) - 1)
            amp = amp * _parity_signs(idx, front)
        return PureState(new_layout, new, amp, normalized=s.normalized)

    if isinstance(state, MixedState):
        return new_layout, state.map_states(lift)
    return new_layout, lift(state)


def transfer_mode(state: StateLike, mode: str, new_party: str) -> StateLike:
    """Re-attribute a mode to another party; amplitudes and ordering are unchanged."""
    layout = state.layout
    layout.spec(mode)
    if new_party not in layout.parties:
        raise LayoutError(f"unknown party {new_party!r}")
    new_layout = layout.with_party(mode, new_party)
    if isinstance(state, MixedState):
        return state.map_states(lambda s: s.with_layout(new_layout))
    return state.with_layout(new_layout)


# --------------------------------------------------------------------------
# state files
# --------------------------------------------------------------------------

STATE_FORMAT = "fermode-state"
STATE_VERSION = 1


def layout_to_document(layout: SystemLayout) -> list[dict]:
    return [{"label": m.label, "statistics": m.statistics.value, "party": m.party} for m in layout.modes]


def layout_from_document(doc: Sequence[Mapping]) -> SystemLayout:
    return SystemLayout(ModeSpec(d["label"], d["statistics"], d["party"]) for d in doc)


def _amplitude_records(state: PureState) -> list[list]:
    return [
        [state.layout.bitstring(int(i)), float(a.real), float(a.imag)]
        for i, a in zip(state.indices, state.amplitudes)
    ]


def _state_from_records(layout, records, normalized=True) -> PureState:
    idx = [layout.occupation_index(r[0]) for r in records]
    amp = [complex(float(r[1]), float(r[2])) for r in records]
    return PureState(layout, idx, amp, normalized=normalized)


def state_to_document(state: StateLike) -> dict:
    doc = {"format": STATE_FORMAT, "version": STATE_VERSION, "layout": layout_to_document(state.layout)}
    if isinstance(state, MixedState):
        doc["kind"] = "mixed"
        doc["ensemble"] = [{"probability": p, "amplitudes": _amplitude_records(s)} for p, s in state.ensemble]
    else:
        doc["kind"] = "pure"
        doc["normalized"] = state.normalized
        doc["amplitudes"] = _amplitude_records(state)
    return doc


def state_from_document(doc: Mapping) -> StateLike:
    if doc.get("format") != STATE_FORMAT:
        raise StateError(f"not a state document: format={doc.get('format')!r}")
    if doc.get("version") != STATE_VERSION:
        raise StateError(f"unsupported state document version {doc.get('version')!r}")
    layout = layout_from_document(doc["layout"])
    if doc.get("kind", "pure") == "mixed":
        return MixedState(
            [(float(m["probability"]), _state_from_records(layout, m["amplitudes"])) for m in doc["ensemble"]]
        )
    return _state_from_records(layout, doc["amplitudes"], doc.get("normalized", True))


def dump_state(state: StateLike) -> str:
    """Serialize to JSON text; floats are written in shortest round-trip form."""
    return json.dumps(state_to_document(state), indent=1)


def load_state(text: str) -> StateLike:
    return state_from_document(json.loads(text))

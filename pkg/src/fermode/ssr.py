"""Parity operators and parity-superselection checks."""

from __future__ import annotations

from enum import Enum, IntEnum

import numpy as np

from .errors import LayoutError, SSRViolation
from .fock import (
    NORM_TOL,
    LinearOperator,
    MixedState,
    PureState,
    SystemLayout,
    _finish,
    _parity_signs,
)

SSR_TOL = 1e-10
BLOCK_CHECK_DIM = 1024


class ParitySector(Enum):
    EVEN = 1
    ODD = -1
    INDEFINITE = 0


class AncillaSign(IntEnum):
    """Whether a local operator commutes (+1) or anticommutes (-1) with the local parity."""

    PRESERVE = 1
    FLIP = -1


def _parity_operator(layout: SystemLayout, modes, party=None) -> LinearOperator:
    support = tuple(m for m in modes if layout.spec(m).is_fermion)
    k = len(support)
    signs = _parity_signs(np.arange(1 << k, dtype=np.int64), (1 << k) - 1)
    return LinearOperator.diagonal(layout, support, signs, party)


def global_parity(layout: SystemLayout) -> LinearOperator:
    """Product of (-1)^n over all fermionic modes; bosons do not enter."""
    return _parity_operator(layout, layout.labels)


def local_parity(layout: SystemLayout, party: str) -> LinearOperator:
    return _parity_operator(layout, layout.party_modes(party), party)


def parity_sector(state, tol: float = SSR_TOL) -> ParitySector:
    members = state.states if isinstance(state, MixedState) else (state,)
    sectors = set()
    for s in members:
        even, odd = s.parity_weights()
        total = even + odd
        if odd <= tol * max(total, 1.0):
            sectors.add(ParitySector.EVEN)
        elif even <= tol * max(total, 1.0):
            sectors.add(ParitySector.ODD)
        else:
            return ParitySector.INDEFINITE
    return sectors.pop() if len(sectors) == 1 else ParitySector.INDEFINITE


def _commutator_residuals(op: LinearOperator):
    """Largest |O_rc| over entries that break [O,P]=0, and over entries that break {O,P}=0."""
    row, col, data = op.entries()
    signs = op.local_parity_signs()
    same = signs[row] == signs[col]
    mag = np.abs(data)
    breaks_commute = float(mag[~same].max(initial=0.0))
    breaks_anti = float(mag[same].max(initial=0.0))
    return breaks_commute, breaks_anti


def _block_residual(op: LinearOperator) -> float:
    """max |O - (P+ O P+ + P- O P-)| built from explicit sector projectors."""
    signs = op.local_parity_signs()
    dense = op.local_dense()
    even = (signs == 1).astype(float)
    odd = (signs == -1).astype(float)
    blocks = dense * np.outer(even, even) + dense * np.outer(odd, odd)
    return float(np.abs(dense - blocks).max(initial=0.0))


def check_ssr_operator(op: LinearOperator, tol: float = SSR_TOL) -> bool:
    """True iff the operator commutes with the global parity.

    Both the commutator form and the sector-block form are evaluated; they
    must agree.
    """
    by_commutator = _commutator_residuals(op)[0] <= tol
    if op.local_dimension <= BLOCK_CHECK_DIM:
        by_blocks = _block_residual(op) <= tol
        if by_blocks != by_commutator:
            raise AssertionError("commutator and block-form SSR checks disagree")
    return by_commutator


def classify_local_op(op: LinearOperator, layout: SystemLayout, party: str, tol: float = SSR_TOL) -> AncillaSign:
    """Certify O P^A = anc P^A O for an operator held by ``party``.

    Raises SSRViolation when neither relation holds (or the operator is zero,
    for which the class is undefined).
    """
    held = set(layout.party_modes(party))
    outside = [m for m in op.support if m not in held]
    if outside:
        raise LayoutError(f"operator acts on {outside}, not held by {party!r}")
    breaks_commute, breaks_anti = _commutator_residuals(op)
    commutes = breaks_commute <= tol
    anticommutes = breaks_anti <= tol
    if commutes and anticommutes:
        raise SSRViolation("zero operator has no parity class")
    if commutes:
        return AncillaSign.PRESERVE
    if anticommutes:
        return AncillaSign.FLIP
    raise SSRViolation(
        f"operator on {op.support} neither commutes nor anticommutes with the local parity of {party!r}"
    )


def project_parity(state: PureState, sector: int | ParitySector) -> PureState:
    """Normalized projection onto a global parity sector, or the zero state if it has no weight there."""
    value = sector.value if isinstance(sector, ParitySector) else int(sector)
    if value not in (1, -1):
        raise ValueError(f"sector must be +1 or -1, got {sector!r}")
    signs = _parity_signs(state.indices, state.layout.fermion_mask)
    keep = signs == value
    idx, amp = state.indices[keep], state.amplitudes[keep]
    if np.sum(np.abs(amp) ** 2) <= NORM_TOL**2:
        return PureState(state.layout, [], [], normalized=False)
    return _finish(state.layout, idx, amp, normalize=True)

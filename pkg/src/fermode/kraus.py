"""Local Kraus sets (generalized measurements) and random SSR-compliant samplers."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import OperatorError
from .fock import NORM_TOL, LinearOperator, SystemLayout, _parity_signs
from .ssr import AncillaSign, classify_local_op

__all__ = ["KrausSet", "sample_random_ssr_povm", "random_ssr_blocks", "haar_isometry"]


@dataclass(frozen=True)
class KrausSet:
    """Kraus elements of one party's local measurement; element i is outcome i."""

    elements: tuple[LinearOperator, ...]
    party: str
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        elements = tuple(self.elements)
        if not elements:
            raise OperatorError("a Kraus set needs at least one element")
        object.__setattr__(self, "elements", elements)
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != len(elements):
                raise OperatorError("one label per Kraus element")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.elements)

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)

    def completeness_residual(self) -> float:
        """max |sum_i M_i^dagger M_i - 1| on the joint support."""
        first = self.elements[0]
        same = all(m.support == first.support and m.fermionic == first.fermionic for m in self.elements)
        if same and first.local_dimension <= 256:
            total = sum(m.local_dense().conj().T @ m.local_dense() for m in self.elements)
            return float(np.abs(total - np.eye(first.local_dimension)).max())
        total = None
        for m in self.elements:
            term = m.adjoint() @ m
            total = term if total is None else total + term
        ident = LinearOperator(total.support, total.fermionic, sp.identity(total.local_dimension))
        return (total - ident).max_abs()

    def is_complete(self, tol: float = NORM_TOL) -> bool:
        return self.completeness_residual() <= tol

    def classes(self, layout: SystemLayout) -> list[AncillaSign]:
        return [classify_local_op(m, layout, self.party) for m in self.elements]


def haar_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """First ``cols`` columns of a Haar-random ``rows`` x ``rows`` unitary."""
    if rows < cols:
        raise ValueError("an isometry needs rows >= cols")
    z = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_ssr_blocks(
    fermionic: Sequence[bool],
    n_elements: int,
    rng: np.random.Generator,
    classes: str = "preserve",
) -> np.ndarray:
    """Dense local Kraus matrices, shape (n_elements, 2^k, 2^k), for modes with the given statistics.

    Each element either preserves or flips the local parity. For every input
    parity block, the stacked output blocks of all elements form a Haar-random
    isometry, which gives completeness. ``classes="preserve"`` draws only
    parity-preserving elements (the executable class when ancillas are part of
    the layout); ``classes="mixed"`` draws each element's class at random,
    modelling a measured ancilla that may flip the parity.
    """
    if not 2 <= n_elements <= 8:
        raise ValueError("n_elements must be between 2 and 8")
    if classes not in ("preserve", "mixed"):
        raise ValueError(f"unknown class policy {classes!r}")
    k = len(fermionic)
    dim = 1 << k
    fmask = sum(1 << (k - 1 - j) for j, f in enumerate(fermionic) if f)
    signs = _parity_signs(np.arange(dim, dtype=np.int64), fmask)
    blocks = {1: np.flatnonzero(signs == 1), -1: np.flatnonzero(signs == -1)}
    if classes == "mixed" and fmask:
        kinds = [int(x) for x in rng.choice([1, -1], size=n_elements)]
    else:
        kinds = [1] * n_elements
    mats = np.zeros((n_elements, dim, dim), dtype=complex)
    for s, cols in blocks.items():
        if len(cols) == 0:
            continue
        outs = [blocks[s * kind] for kind in kinds]
        iso = haar_isometry(sum(len(o) for o in outs), len(cols), rng)
        start = 0
        for i, out in enumerate(outs):
            mats[i][np.ix_(out, cols)] = iso[start : start + len(out)]
            start += len(out)
    return mats


def sample_random_ssr_povm(
    layout: SystemLayout,
    party: str,
    n_elements: int,
    rng: np.random.Generator,
    *,
    modes: Sequence[str] | None = None,
    classes: str = "preserve",
) -> KrausSet:
    """Random complete Kraus set on a party's modes, SSR-compliant by construction.

    See ``random_ssr_blocks`` for the construction; ``modes`` defaults to all
    of the party's modes.
    """
    modes = tuple(layout.party_modes(party) if modes is None else modes)
    if any(layout.party_of(m) != party for m in modes):
        raise OperatorError("POVM modes must belong to the party")
    fermionic = [layout.spec(m).is_fermion for m in modes]
    mats = random_ssr_blocks(fermionic, n_elements, rng, classes)
    elements = tuple(LinearOperator(modes, fermionic, m, party) for m in mats)
    return KrausSet(elements, party)

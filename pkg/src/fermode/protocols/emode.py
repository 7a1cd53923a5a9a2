"""Partially entangled single-fermion pair states alpha|01> + beta|10>."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from ..errors import StateError
from ..fock import ModeSpec, PureState, SystemLayout


@dataclass(frozen=True)
class EModeParams:
    """Amplitudes of alpha|0_A 1_B> + beta|1_A 0_B>."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise StateError(f"|alpha|^2 + |beta|^2 = {norm!r}, expected 1")

    @classmethod
    def from_alpha2(cls, alpha2: float, phase: float = 0.0) -> EModeParams:
        """|alpha|^2 plus the relative phase of beta."""
        if not 0.0 <= alpha2 <= 1.0:
            raise StateError(f"|alpha|^2 = {alpha2!r} outside [0, 1]")
        return cls(math.sqrt(alpha2), math.sqrt(1.0 - alpha2) * cmath.exp(1j * phase))

    @classmethod
    def random(cls, rng: np.random.Generator) -> EModeParams:
        """Uniform |alpha|^2 and independent uniform phases."""
        a2 = rng.random()
        pa, pb = rng.uniform(0.0, 2 * math.pi, size=2)
        return cls(math.sqrt(a2) * cmath.exp(1j * pa), math.sqrt(1.0 - a2) * cmath.exp(1j * pb))

    @property
    def alpha2(self) -> float:
        return abs(self.alpha) ** 2

    @property
    def beta2(self) -> float:
        return abs(self.beta) ** 2

    def vector(self) -> np.ndarray:
        """Amplitudes on the pair basis |n_A n_B>."""
        return np.array([0.0, self.alpha, self.beta, 0.0], dtype=complex)

    def entropy(self) -> float:
        """Entanglement entropy of one side in bits."""
        return float(sum(-p * math.log2(p) for p in (self.alpha2, self.beta2) if p > 0))


def emode_state(params: EModeParams, mode_a: ModeSpec, mode_b: ModeSpec) -> PureState:
    """alpha|0_a 1_b> + beta|1_a 0_b> on the two-mode layout (mode_a, mode_b)."""
    return PureState.from_vector(SystemLayout([mode_a, mode_b]), params.vector())

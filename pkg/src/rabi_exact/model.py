"""Parameters, parity sectors and result containers.

Everything is expressed in units of the cavity frequency (omega = 1), for the
rotated Hamiltonian

    H = -(delta/2) sigma_x + a^dag a + g (a^dag + a) sigma_z .
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any

from .errors import InvalidCoupling, InvalidDetuning, NonFinite

if TYPE_CHECKING:
    from .coherent_poly import ScaledCoefficients

# Below this coupling the recurrence (which divides by g) is useless; use the
# oracle or the decoupled limit E = n -/+ delta/2 instead.
G_MIN = 1e-6


class Parity(enum.IntEnum):
    """Eigenvalue of sigma_x exp(i pi a^dag a).

    EVEN selects the upper signs of the coefficient identities and gives
    E = alpha g - delta/2; ODD the lower signs and E = alpha g + delta/2.
    """

    EVEN = 1
    ODD = -1

    @property
    def sign(self) -> int:
        return int(self)

    @property
    def label(self) -> str:
        return "even" if self is Parity.EVEN else "odd"

    @classmethod
    def parse(cls, value: Any) -> "Parity":
        if isinstance(value, Parity):
            return value
        text = str(value).strip().lower()
        if text in ("even", "+", "+1", "1", "plus"):
            return cls.EVEN
        if text in ("odd", "-", "-1", "minus"):
            return cls.ODD
        raise ValueError(f"unknown parity {value!r}")


@dataclass(frozen=True)
class ModelParams:
    g: float
    delta: float

    def __post_init__(self):
        g, delta = self.g, self.delta
        if not (isinstance(g, (int, float)) and isinstance(delta, (int, float))):
            raise NonFinite(f"parameters must be real numbers, got g={g!r}, delta={delta!r}")
        if not (math.isfinite(g) and math.isfinite(delta)):
            raise NonFinite(f"non-finite parameters g={g}, delta={delta}")
        if g <= 0:
            raise InvalidCoupling(f"InvalidCoupling: g must be > 0, got {g}")
        if g < G_MIN:
            raise InvalidCoupling(
                f"InvalidCoupling: g={g} is below {G_MIN}; use the exact-diagonalization "
                "oracle or the decoupled limit instead"
            )
        if delta < 0:
            raise InvalidDetuning(f"InvalidDetuning: delta must be >= 0, got {delta}")
        object.__setattr__(self, "g", float(g))
        object.__setattr__(self, "delta", float(delta))

    @property
    def half_delta(self) -> float:
        return 0.5 * self.delta


def validate_params(g: float, delta: float) -> ModelParams:
    return ModelParams(g, delta)


@dataclass(frozen=True)
class EnergyLevel:
    """One converged eigenstate of the coherent-state method."""

    index: int
    parity: Parity
    energy: float
    alpha: float
    coefficients: "ScaledCoefficients"
    truncation_m: int
    residual_norm: float | None = None
    converged: bool = True
    m_converged: int | None = None

    def with_index(self, index: int) -> "EnergyLevel":
        return replace(self, index=index)

    def with_residual(self, residual: float | None) -> "EnergyLevel":
        return replace(self, residual_norm=residual)


def sort_levels(levels) -> list[EnergyLevel]:
    """Ascending energy; exact ties put the even level first."""
    ordered = sorted(levels, key=lambda lv: (lv.energy, -lv.parity.sign))
    return [lv.with_index(i) for i, lv in enumerate(ordered)]


@dataclass(frozen=True)
class Spectrum:
    params: ModelParams
    levels: tuple[EnergyLevel, ...]
    solver_metadata: dict = field(default_factory=dict, compare=False)

    @property
    def energies(self) -> list[float]:
        return [lv.energy for lv in self.levels]

    def sector(self, parity: Parity) -> list[EnergyLevel]:
        return [lv for lv in self.levels if lv.parity is parity]

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

"""Closed-form special cases: the two-coefficient truncation and the
displaced-oscillator limit."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .coherent_poly import energy_from_alpha
from .errors import OutsideValidity
from .model import ModelParams, Parity


@dataclass(frozen=True)
class FodSolution:
    parity: Parity
    roots: tuple
    energies: tuple
    physical_flags: tuple


def fod_coefficients(params: ModelParams, parity: Parity) -> tuple[float, float, float]:
    """(A, B, C) of A alpha^2 + B alpha + C = 0 for the M = 2 truncation."""
    s = parity.sign
    g, d = params.g, params.delta
    return -s * d * g, -(1.0 + s * d), -g


def _stable_roots(a, b, c):
    if a == 0.0:
        if b == 0.0:
            return ()
        return (-c / b,)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return ()
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b if b != 0.0 else 1.0))
    if q == 0.0:
        return (0.0,)
    # a tiny leading coefficient sends one root off to infinity; drop it
    return tuple(sorted(r for r in {q / a, c / q} if math.isfinite(r)))


def fod_roots(params: ModelParams, parity: Parity) -> FodSolution:
    """Real roots of the M = 2 quadratic with energies E = alpha g -/+ delta/2.

    In the even sector the branch that does not connect to E = -delta/2 as
    g -> 0 (the large-|alpha| root) is flagged unphysical.
    """
    a, b, c = fod_coefficients(params, parity)
    roots = _stable_roots(a, b, c)
    energies = tuple(energy_from_alpha(r, params, parity) for r in roots)
    if parity is Parity.EVEN and len(roots) == 2:
        small = min(range(2), key=lambda i: abs(roots[i]))
        flags = tuple(i == small for i in range(2))
    else:
        flags = tuple(True for _ in roots)
    return FodSolution(parity, roots, energies, flags)


def fod_ground_energy(params: ModelParams) -> float:
    """Ground-state energy of the even-sector M = 2 truncation."""
    a, b, c = fod_coefficients(params, Parity.EVEN)
    if a != 0.0 and b * b - 4.0 * a * c < 0.0:
        raise OutsideValidity(
            f"OutsideValidity: no real two-coefficient solution at g={params.g}, "
            f"delta={params.delta}"
        )
    sol = fod_roots(params, Parity.EVEN)
    for alpha, energy, ok in zip(sol.roots, sol.energies, sol.physical_flags):
        if ok:
            return energy
    raise OutsideValidity("no physical branch")  # pragma: no cover


def strong_coupling_levels(params: ModelParams, n_levels: int) -> list[tuple[float, int]]:
    """m - g^2, each twice, enough of them to cover n_levels states."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    count = (n_levels + 1) // 2
    return [(m - params.g**2, 2) for m in range(count)]

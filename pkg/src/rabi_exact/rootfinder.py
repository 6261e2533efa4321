"""Real-root isolation for functions known only through their sign.

Grid bracketing followed by plain bisection.  The boundary function spans
hundreds of decades, so neither its value nor its derivative is usable; the
sign is all we rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence

DEDUP_TOL = 1e-8


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    sign_lo: int
    sign_hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"bracket lo={self.lo} > hi={self.hi}")
        if self.lo < self.hi and self.sign_lo * self.sign_hi != -1:
            raise ValueError("bracket endpoints must have opposite nonzero signs")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    @classmethod
    def point(cls, x: float) -> "Bracket":
        return cls(x, x, 0, 0)


@dataclass(frozen=True)
class RootCandidate:
    alpha: float
    bracket: Bracket
    width_at_stop: float
    evaluations: int
    m: int | None = None


def _grid(lo, hi, n_grid):
    xs = np.linspace(lo, hi, n_grid + 1)
    xs[0], xs[-1] = lo, hi
    return xs


def brackets_from_signs(xs, signs) -> list[Bracket]:
    """Brackets between consecutive sampled signs; zeros become point brackets."""
    out = []
    n = len(xs)
    for i in range(n):
        if signs[i] == 0:
            out.append(Bracket.point(float(xs[i])))
        elif i + 1 < n and signs[i + 1] != 0 and signs[i] != signs[i + 1]:
            out.append(Bracket(float(xs[i]), float(xs[i + 1]), int(signs[i]), int(signs[i + 1])))
    return out


def scan_brackets(f, lo: float, hi: float, n_grid: int, signs_many=None) -> list[Bracket]:
    """Sample ``f`` at n_grid + 1 uniform points of [lo, hi] and bracket sign changes.

    ``signs_many`` optionally evaluates the whole grid at once (same result as
    mapping ``f``, just faster).
    """
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    xs = _grid(lo, hi, n_grid)
    if signs_many is not None:
        signs = [int(s) for s in signs_many(xs)]
    else:
        signs = [int(f(float(x))) for x in xs]
    return brackets_from_signs(xs, signs)


def refine_root(f, bracket: Bracket, tol: float, max_iter: int = 200) -> RootCandidate:
    """Bisect until the width is at most tol * max(1, |alpha|)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if bracket.is_point:
        return RootCandidate(bracket.lo, bracket, 0.0, 0)
    lo, hi = bracket.lo, bracket.hi
    s_lo = bracket.sign_lo
    evals = 0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            return RootCandidate(mid, bracket, hi - lo, evals)
        if mid <= lo or mid >= hi:
            # adjacent doubles: cannot narrow further
            return RootCandidate(mid, bracket, hi - lo, evals)
        s = f(mid)
        evals += 1
        if s == 0:
            return RootCandidate(mid, bracket, 0.0, evals)
        if s == s_lo:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if hi - lo <= tol * max(1.0, abs(mid)):
        return RootCandidate(mid, bracket, hi - lo, evals)
    raise NoConvergence(
        f"bisection stopped after {max_iter} steps with width {hi - lo:.3e}",
        partial=[RootCandidate(mid, bracket, hi - lo, evals)],
    )


def dedup_roots(roots, tol: float = DEDUP_TOL) -> list[RootCandidate]:
    """Merge candidates closer than tol * max(1, |alpha|); keep the tighter one."""
    out: list[RootCandidate] = []
    for r in sorted(roots, key=lambda r: r.alpha):
        if out and abs(r.alpha - out[-1].alpha) <= tol * max(1.0, abs(r.alpha)):
            if r.width_at_stop < out[-1].width_at_stop:
                out[-1] = r
            continue
        out.append(r)
    return out


def find_roots(f, lo, hi, n_grid, tol, max_iter=200, signs_many=None) -> list[RootCandidate]:
    brackets = scan_brackets(f, lo, hi, n_grid, signs_many=signs_many)
    return dedup_roots([refine_root(f, b, tol, max_iter) for b in brackets])

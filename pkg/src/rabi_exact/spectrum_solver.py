"""From boundary-function roots to a labelled, validated spectrum.

Per parity sector: scan f_M over an alpha window, refine every sign change,
drop roots that cannot be eigenvalues, and raise M by two until the lowest
roots stop moving.  Sectors are then merged and optionally checked by applying
the Fock-basis Hamiltonian to the reconstructed eigenvectors.

Two facts about the spectrum are used as hard checks.  Writing
H = (a^dag + g sigma_z)(a + g sigma_z) - g^2 - (delta/2) sigma_x, the first term has
spectrum 0, 1, 2, ... in each parity sector and the last has norm delta/2, so
the i-th level of a sector lies in [i - g^2 - delta/2, i - g^2 + delta/2].
A root below the lower edge of that band for i = 0 is unphysical; a root above
the upper edge of its band means a level was missed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import coherent_poly as cp
from .errors import NoConvergence, TruncationTooSmall, WindowTooSmall
from .model import EnergyLevel, ModelParams, Parity, Spectrum, sort_levels
from .rootfinder import RootCandidate, brackets_from_signs, dedup_roots, refine_root

log = logging.getLogger(__name__)

TAIL_RATIO = 1e-3
DEGENERATE = 1e-10
BAND_SLACK = 1e-9
N_FOCK_CAP = 4096
STALL_STEPS = 5


@dataclass(frozen=True)
class SolveOptions:
    n_levels: int = 9
    alpha_tol: float = 1e-8
    m_start: int | None = None
    m_max: int = 201
    window: tuple | None = None
    residual_check: bool = True
    residual_n_fock: int | None = None
    n_grid: int = 4000
    root_tol: float = 1e-14

    def __post_init__(self):
        if self.n_levels < 1:
            raise ValueError("n_levels must be >= 1")
        if not self.alpha_tol > 0:
            raise ValueError("alpha_tol must be positive")
        if self.m_start is not None and self.m_start < 2:
            raise ValueError("m_start must be >= 2")
        start = self.m_start if self.m_start is not None else 20
        if self.m_max < start:
            raise ValueError("m_max must be >= m_start")
        if self.window is not None:
            lo, hi = self.window
            if not lo < hi:
                raise ValueError(f"empty window {self.window}")
            object.__setattr__(self, "window", (float(lo), float(hi)))
        if self.n_grid < 2:
            raise ValueError("n_grid must be >= 2")


def sector_m(m: int, parity: Parity) -> int:
    """Smallest admissible truncation >= m: odd for even parity, even for odd."""
    want = 1 if parity is Parity.EVEN else 0
    return m if m % 2 == want else m + 1


def default_m_start(parity: Parity) -> int:
    return 19 if parity is Parity.EVEN else 20


def scan_window(params: ModelParams, n_levels: int) -> tuple[float, float]:
    g, h = params.g, params.half_delta
    lo = (-g * g - h - 2.0) / g - 2.0
    hi = (n_levels + h + 2.0) / g + 2.0
    return lo, hi


def band(params: ModelParams, i: int) -> tuple[float, float]:
    """Energy interval holding the i-th level (0-based) of either sector."""
    base = i - params.g**2
    return base - params.half_delta, base + params.half_delta


def filter_physical(candidates, params: ModelParams, parity: Parity, m: int, dropped=None):
    """Remove roots that cannot be eigenvalues of the sector.

    When the truncation parity does not match the sector, the lowest root is
    the spurious one; it is dropped if its coefficients fail to decay
    (|c_M| / max |c_n| > 1e-3).  Then every root below the lowest band is
    dropped.  With matched parity the tail is not tested: at small g the
    coefficients of a perfectly converged root grow at large n, so the tail
    test alone would reject true levels.
    """
    kept = sorted(candidates, key=lambda c: c.alpha)
    if kept and sector_m(m, parity) != m:
        coeffs = cp.coefficient_sequence(kept[0].alpha, params, parity, m)
        if coeffs.tail_ratio() > TAIL_RATIO:
            if dropped is not None:
                dropped.append({"alpha": kept[0].alpha, "m": m, "reason": "non-decaying tail"})
            kept = kept[1:]
    lo_edge = band(params, 0)[0]
    out = []
    for cand in kept:
        energy = cp.energy_from_alpha(cand.alpha, params, parity)
        if energy < lo_edge - BAND_SLACK * max(1.0, abs(lo_edge)):
            if dropped is not None:
                dropped.append({"alpha": cand.alpha, "m": m, "reason": "below spectrum bound"})
            continue
        out.append(cand)
    return out


@dataclass
class _Track:
    alpha: float
    m: int
    converged: bool = False
    first_converged: int | None = None


@dataclass
class SectorReport:
    levels: list
    m_final: int
    window: tuple
    dropped: list = field(default_factory=list)
    densified: int = 0


def _roots_at(poly, params, parity, m, lo, hi, n_grid, tol, dropped):
    xs = np.linspace(lo, hi, n_grid + 1)
    signs = poly.signs(xs, m)
    f = poly.sign_function(m)
    roots = [refine_root(f, b, tol) for b in brackets_from_signs(xs, signs)]
    roots = [replace(r, m=m) for r in dedup_roots(roots)]
    return filter_physical(roots, params, parity, m, dropped)


def _match(prev: list[_Track], roots: list[RootCandidate]):
    """Nearest-alpha pairing of new roots to previous ones.

    Returns (pairs, collision): pairs[i] is the index into prev matched to
    roots[i] (or None); collision is True if two new roots want the same one.
    """
    if not prev:
        return [None] * len(roots), False
    palpha = np.array([t.alpha for t in prev])
    want = [int(np.argmin(np.abs(palpha - r.alpha))) for r in roots]
    collision = len(set(want)) != len(want)
    pairs: list = [None] * len(roots)
    taken = set()
    order = sorted(range(len(roots)), key=lambda i: abs(palpha[want[i]] - roots[i].alpha))
    for i in order:
        if want[i] not in taken:
            pairs[i] = want[i]
            taken.add(want[i])
    return pairs, collision


def _make_level(track: _Track, params, parity, m) -> EnergyLevel:
    coeffs = cp.converged_coefficients(track.alpha, params, parity, m)
    return EnergyLevel(
        index=0,
        parity=parity,
        energy=cp.energy_from_alpha(track.alpha, params, parity),
        alpha=track.alpha,
        coefficients=coeffs,
        truncation_m=m,
        residual_norm=None,
        converged=track.converged,
        m_converged=track.first_converged,
    )


def solve_sector_report(params: ModelParams, parity: Parity, opts: SolveOptions) -> SectorReport:
    k = opts.n_levels
    m = sector_m(opts.m_start if opts.m_start is not None else default_m_start(parity), parity)
    m_max = opts.m_max
    lo, hi = opts.window if opts.window is not None else scan_window(params, k)
    poly = cp.boundary_polynomial(params, parity)
    n_grid = opts.n_grid
    dropped: list = []
    densified = 0
    prev: list[_Track] = []
    stall = 0
    last_tracks: list[_Track] = []
    while True:
        roots = _roots_at(poly, params, parity, m, lo, hi, n_grid, opts.root_tol, dropped)
        pairs, collision = _match(prev, roots)
        if collision:
            densified += 1
            roots = _roots_at(poly, params, parity, m, lo, hi, 4 * n_grid, opts.root_tol, dropped)
            pairs, _ = _match(prev, roots)
        tracks = []
        for r, j in zip(roots, pairs):
            t = _Track(r.alpha, m)
            if j is not None:
                old = prev[j]
                if abs(r.alpha - old.alpha) < opts.alpha_tol * max(1.0, abs(r.alpha)):
                    t.converged = True
                    t.first_converged = old.first_converged if old.converged else m
            tracks.append(t)
        last_tracks = tracks
        lowest = tracks[:k]
        _check_bands(params, parity, lowest, m)
        if len(lowest) == k and all(t.converged for t in lowest):
            levels = [_make_level(t, params, parity, m) for t in lowest]
            return SectorReport(levels, m, (lo, hi), dropped, densified)
        if len(tracks) < k and tracks and all(t.converged for t in tracks):
            stall += 1
        else:
            stall = 0
        if stall >= STALL_STEPS or m + 2 > m_max:
            break
        prev = tracks
        m += 2

    if len(last_tracks) < k and all(t.converged for t in last_tracks):
        # every root in the window is settled but there are too few of them
        roots = _roots_at(poly, params, parity, m, lo, hi, 4 * n_grid, opts.root_tol, dropped)
        densified += 1
        if len(roots) < k:
            raise WindowTooSmall(
                f"{parity.label} sector: {len(roots)} roots in alpha window [{lo:g}, {hi:g}], "
                f"{k} requested"
            )
    partial = [_make_level(t, params, parity, m) for t in last_tracks[:k]]
    raise NoConvergence(
        f"{parity.label} sector: lowest {k} roots not converged by M={m}", partial=partial
    )


def _check_bands(params, parity, tracks, m):
    """Converged roots must sit in their bands; anything else is logged."""
    for i, t in enumerate(tracks):
        if not t.converged:
            continue
        e = cp.energy_from_alpha(t.alpha, params, parity)
        lo, hi = band(params, i)
        if e > hi + BAND_SLACK * max(1.0, abs(hi)):
            log.warning("%s level %d at M=%d (E=%.10g) above its band: missed root?", parity.label, i, m, e)


def solve_sector(params: ModelParams, parity: Parity, opts: SolveOptions) -> list[EnergyLevel]:
    """Lowest ``opts.n_levels`` levels of one parity sector, ascending."""
    return solve_sector_report(params, parity, opts).levels


def residual_norm(level: EnergyLevel, params: ModelParams, n_fock: int) -> float:
    """||H psi - E psi|| / ||psi|| for the level's coefficients expanded on n_fock
    Fock states and hit with the full Hamiltonian matrix."""
    from .ed_oracle import build_full_matrix

    vec = cp.fock_expansion(level.alpha, level.coefficients, level.parity, n_fock)
    psi = vec.as_state()
    h = build_full_matrix(params, n_fock)
    res = h @ psi - level.energy * psi
    return float(np.linalg.norm(res) / np.linalg.norm(psi))


def fock_size_estimate(alpha: float, m: int) -> int:
    """Fock truncation at which the expansion tail is expected below 1e-12.

    The expansion is a degree-m polynomial in a^dag times a coherent state of
    amplitude alpha, whose photon distribution dies off past ~alpha^2.
    """
    a = abs(alpha)
    return int(a * a + 12.0 * a + 2 * m + 50)


@dataclass(frozen=True)
class Validation:
    residual: float | None
    m_vec: int
    n_fock: int | None
    reason: str = ""


def vector_m_estimate(alpha: float) -> int:
    """Truncation at which the eigenvector residual collapses.

    Measured: the residual creeps up with M and then drops by ten or more
    decades once M passes roughly 40 |alpha| (g from 0.5 to 1, alpha up to 5).
    """
    return int(math.ceil(40.0 * abs(alpha)))


def validate_level(
    level: EnergyLevel, params: ModelParams, opts: SolveOptions, target: float = 1e-12
) -> Validation:
    """Residual of the level's eigenvector, lengthening the series if useful.

    The energy converges at much smaller M than the eigenvector does.  If the
    residual at the level's own M is above ``target`` and the estimate of
    ``vector_m_estimate`` fits under m_max, the series is recomputed there and
    then lengthened in steps of 20 up to m_max.  Returns the best residual seen;
    the residual is None when the needed Fock space exceeds the cap.
    """
    best = None
    note = ""
    m_vec = level.truncation_m
    while True:
        if m_vec == level.truncation_m:
            lv = level
        else:
            coeffs = cp.converged_coefficients(level.alpha, params, level.parity, m_vec)
            lv = replace(level, coefficients=coeffs)
        n_fock = opts.residual_n_fock or max(4 * m_vec + 50, fock_size_estimate(level.alpha, m_vec))
        res = None
        while n_fock <= N_FOCK_CAP:
            try:
                res = residual_norm(lv, params, n_fock)
                break
            except TruncationTooSmall:
                n_fock *= 2
        if res is None:
            note = f"Fock tail not settled within {N_FOCK_CAP} states at M={m_vec}"
            break
        if best is None or res < best.residual:
            best = Validation(res, m_vec, n_fock)
        if res <= target:
            break
        nxt = max(m_vec + 20, sector_m(vector_m_estimate(level.alpha), level.parity))
        if nxt > opts.m_max:
            if m_vec + 20 <= opts.m_max < nxt:
                note = f"eigenvector needs M ~ {nxt} (> m_max)"
            break
        m_vec = nxt
    if best is None:
        return Validation(None, m_vec, None, note)
    return replace(best, reason=note)


def _merge(params, found, n_levels):
    levels = sort_levels(found[Parity.EVEN] + found[Parity.ODD])
    return levels[:n_levels]


def solve_spectrum(params: ModelParams, opts: SolveOptions | None = None) -> Spectrum:
    """Lowest ``opts.n_levels`` levels of both sectors, merged and ascending.

    Each sector starts with ceil(n/2) levels and grows until its highest level
    lies above the merged cut, so no sector level below the cut is left out.
    """
    opts = opts or SolveOptions()
    n = opts.n_levels
    want = {Parity.EVEN: (n + 1) // 2, Parity.ODD: (n + 1) // 2}
    reports: dict = {}
    found: dict = {}
    while True:
        for parity in (Parity.EVEN, Parity.ODD):
            if parity in reports and len(reports[parity].levels) >= want[parity]:
                continue
            sector_opts = replace(opts, n_levels=want[parity])
            try:
                reports[parity] = solve_sector_report(params, parity, sector_opts)
            except NoConvergence as exc:
                raise NoConvergence(f"{parity.label}: {exc}", partial=exc.partial) from exc
            except WindowTooSmall as exc:
                raise WindowTooSmall(f"{parity.label}: {exc}") from exc
            found[parity] = reports[parity].levels
        merged = _merge(params, found, n)
        cut = merged[-1].energy if len(merged) == n else math.inf
        grow = False
        for parity in (Parity.EVEN, Parity.ODD):
            top = found[parity][-1].energy
            if top < cut or len(merged) < n:
                want[parity] += 1
                grow = True
        if not grow:
            break
        if len(merged) < n and max(want.values()) > n:
            raise WindowTooSmall(f"could not collect {n} levels")

    checks = {}
    if opts.residual_check:
        out = []
        for lv in merged:
            v = validate_level(lv, params, opts)
            checks[lv.index] = {"m_vec": v.m_vec, "n_fock": v.n_fock, "note": v.reason}
            out.append(lv.with_residual(v.residual))
        merged = out
    meta = {
        "m_final": {p.label: reports[p].m_final for p in reports},
        "window": {p.label: reports[p].window for p in reports},
        "levels_per_sector": {p.label: len(reports[p].levels) for p in reports},
        "alpha_tol": opts.alpha_tol,
        "root_tol": opts.root_tol,
        "n_grid": opts.n_grid,
        "dropped": {p.label: reports[p].dropped for p in reports},
        "densified": {p.label: reports[p].densified for p in reports},
        "residual": checks,
    }
    return Spectrum(params, tuple(merged), meta)

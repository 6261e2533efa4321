"""Reference eigenvalues by direct diagonalization in a truncated Fock basis.

Basis ordering for the full matrix is |n> x {up, down} -> index 2n + spin with
spin 0 = up (sigma_z = +1).  In the parity basis each sector reduces to a chain

    d_k = k - s (-1)^k delta/2,     e_k = g sqrt(k + 1),

which is what the oracle actually diagonalizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .errors import NoConvergence, TruncationCapExceeded
from .model import ModelParams, Parity

N_START = 64
N_CAP = 1 << 20


@dataclass(frozen=True, eq=False)
class TridiagonalOperator:
    d: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if d.ndim != 1 or e.ndim != 1 or e.size != d.size - 1:
            raise ValueError(f"inconsistent lengths: |d|={d.size}, |e|={e.size}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise ValueError("tridiagonal entries must be finite")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "e", e)

    @property
    def dim(self) -> int:
        return self.d.size

    def to_dense(self) -> np.ndarray:
        return np.diag(self.d) + np.diag(self.e, 1) + np.diag(self.e, -1)


def build_parity_chain(params: ModelParams, parity: Parity, n: int) -> TridiagonalOperator:
    """Sector Hamiltonian on n + 1 parity-adapted states."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n + 1, dtype=float)
    alt = np.where(np.arange(n + 1) % 2 == 0, 1.0, -1.0)
    d = k - parity.sign * alt * params.half_delta
    e = params.g * np.sqrt(k[1:])
    return TridiagonalOperator(d, e)


def build_full_matrix(params: ModelParams, n: int) -> sp.csr_matrix:
    """Full Hamiltonian on |0..n> x {up, down} as a sparse symmetric matrix."""
    if n < 0:
        raise ValueError("n must be >= 0")
    dim = 2 * (n + 1)
    ns = np.arange(n + 1)
    rows, cols, vals = [], [], []
    for spin, sz in ((0, 1.0), (1, -1.0)):
        idx = 2 * ns + spin
        rows.append(idx)
        cols.append(idx)
        vals.append(ns.astype(float))
        # g (a^dag + a) sigma_z couples n and n + 1 within one spin
        off = params.g * sz * np.sqrt(ns[1:].astype(float))
        lo = 2 * ns[:-1] + spin
        hi = 2 * ns[1:] + spin
        rows += [lo, hi]
        cols += [hi, lo]
        vals += [off, off]
    if params.delta != 0.0:
        up = 2 * ns
        down = 2 * ns + 1
        flip = np.full(n + 1, -params.half_delta)
        rows += [up, down]
        cols += [down, up]
        vals += [flip, flip]
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    return mat.tocsr()


def parity_operator(n: int) -> sp.csr_matrix:
    """(-1)^n times the spin swap, same basis as ``build_full_matrix``."""
    ns = np.arange(n + 1)
    sign = np.where(ns % 2 == 0, 1.0, -1.0)
    up = 2 * ns
    down = 2 * ns + 1
    rows = np.concatenate([up, down])
    cols = np.concatenate([down, up])
    vals = np.concatenate([sign, sign])
    dim = 2 * (n + 1)
    return sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()


def tridiagonal_eigenvalues(op: TridiagonalOperator, k: int) -> list[float]:
    """k smallest eigenvalues of a symmetric tridiagonal matrix, ascending."""
    if not 1 <= k <= op.dim:
        raise ValueError(f"k={k} outside 1..{op.dim}")
    if op.dim == 1:
        return [float(op.d[0])]
    try:
        w = eigh_tridiagonal(
            op.d, op.e, eigvals_only=True, select="i", select_range=(0, k - 1), lapack_driver="stebz"
        )
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"tridiagonal eigensolver failed: {exc}") from exc
    return [float(x) for x in np.sort(w)]


def sector_eigenvalues(params: ModelParams, parity: Parity, n: int, k: int) -> list[float]:
    chain = build_parity_chain(params, parity, n)
    return tridiagonal_eigenvalues(chain, min(k, chain.dim))


def merged_eigenvalues(params: ModelParams, n: int, k: int) -> list[tuple[float, Parity]]:
    pairs = []
    for parity in (Parity.EVEN, Parity.ODD):
        pairs += [(e, parity) for e in sector_eigenvalues(params, parity, n, k)]
    pairs.sort(key=lambda p: (p[0], -p[1].sign))
    return pairs[:k]


@dataclass(frozen=True)
class EdResult:
    energies: list
    parities: list
    n_fock: int


def ed_solve(params: ModelParams, n_levels: int, rel_tol: float = 1e-10) -> EdResult:
    """Double the Fock truncation until the lowest levels stop moving.

    A level counts as settled when it moves by at most rel_tol * max(1, |E|)
    between successive truncations.
    """
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    n = max(N_START, 2 * n_levels)
    prev = None
    while True:
        if n > N_CAP:
            raise TruncationCapExceeded(f"Fock truncation would exceed {N_CAP}")
        cur = merged_eigenvalues(params, n, n_levels)
        if prev is not None:
            a = np.array([p[0] for p in prev])
            b = np.array([p[0] for p in cur])
            if np.all(np.abs(a - b) <= rel_tol * np.maximum(1.0, np.abs(b))):
                return EdResult([p[0] for p in cur], [p[1] for p in cur], n)
        prev = cur
        n *= 2


def ed_spectrum(params: ModelParams, n_levels: int, rel_tol: float = 1e-10) -> list[float]:
    """Lowest n_levels eigenvalues (both parities merged), ascending."""
    return ed_solve(params, n_levels, rel_tol).energies

"""Extended coherent-state expansion: coefficient recurrence, boundary function
and Fock-space reconstruction.

With the ansatz

    upper = sum_n c_n (a^dag)^n exp(alpha a^dag)|0>
    lower = +/- sum_n c_n (-a^dag)^n exp(-alpha a^dag)|0>

the constant term fixes E = alpha g -/+ delta/2 and the remaining identities give
c_{k+1} as a function of c_0..c_k.  Truncating at c_{M+1} = 0 leaves a single
polynomial equation f_M(alpha) = 0 of degree M.

Arithmetic
----------
For excited states alpha grows like E/g and the recurrence cancels roughly
half a bit per unit of alpha, so double precision runs out beyond the first
few levels.  All evaluation uses arb balls (midpoint plus a rigorous error
radius) from python-flint.  A sign is reported as certified only when the ball
excludes zero; otherwise the precision doubles.  arb exponents are unbounded,
so nothing overflows; the exported ``ScaledCoefficients`` are still
max-normalised with an explicit log scale.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import flint
import numpy as np
from flint import arb, arb_poly

from .errors import NonFinite, TruncationTooSmall
from .model import ModelParams, Parity

ALPHA_LIMIT = 1e6
MAX_BITS = 1 << 15
BUILD_BITS = 512
FOCK_TAIL = 1e-12
LN2 = math.log(2.0)


def _workprec(bits):
    return flint.ctx.workprec(int(bits))


def _check_alpha(alpha):
    if isinstance(alpha, arb):
        alpha = float(alpha.mid())
    alpha = float(alpha)
    if not math.isfinite(alpha):
        raise NonFinite(f"alpha must be finite, got {alpha}")
    if abs(alpha) > ALPHA_LIMIT:
        raise ValueError(f"|alpha| = {abs(alpha):g} exceeds {ALPHA_LIMIT:g}")
    return alpha


def default_bits(alpha: float, m: int) -> int:
    """Working precision that comfortably covers the cancellation at ``alpha``."""
    bits = 128 + math.ceil(0.8 * abs(alpha)) + 2 * m
    return 64 * math.ceil(bits / 64)


def _sign(x) -> int:
    """+1/-1 when the ball excludes zero, 0 otherwise."""
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0


def _ln_abs(x) -> float:
    if x.is_zero():
        return -math.inf
    mid = abs(x.mid())
    if mid.is_zero():
        return -math.inf
    return float(mid.log().mid())


def _to_float(x) -> float:
    return float(x.mid())


def energy_from_alpha(alpha: float, params: ModelParams, parity: Parity) -> float:
    """E = alpha g - delta/2 (even) or alpha g + delta/2 (odd)."""
    return alpha * params.g - parity.sign * params.half_delta


def alpha_from_energy(energy: float, params: ModelParams, parity: Parity) -> float:
    return (energy + parity.sign * params.half_delta) / params.g


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScaledCoefficients:
    """c_0..c_m with true c_n = values[n] * exp(log_scale).

    ``exact`` keeps the unnormalised arb balls; the Fock reconstruction needs
    them because it cancels far more than 53 bits.
    """

    values: np.ndarray
    log_scale: float
    m: int
    alpha: float
    params: ModelParams
    parity: Parity
    precision: int
    exact: tuple = field(repr=False)
    alpha_ball: object = field(default=None, repr=False)

    @classmethod
    def from_exact(cls, exact, alpha, params, parity, precision, alpha_ball=None):
        exact = tuple(exact)
        with _workprec(precision):
            big = arb(0)
            for x in exact:
                mag = abs(x.mid())
                if mag > big:
                    big = mag
            values = np.array([_to_float(x.mid() / big) for x in exact])
            log_scale = float(big.log().mid())
        # exact unit maximum even after rounding the quotient
        k = int(np.argmax(np.abs(values)))
        values[k] = math.copysign(1.0, values[k])
        return cls(
            values, log_scale, len(exact) - 1, alpha, params, parity, precision, exact, alpha_ball
        )

    def true_value(self, n: int) -> float:
        return _to_float(self.exact[n])

    def normalized_abs(self) -> np.ndarray:
        return np.abs(self.values)

    def tail_ratio(self) -> float:
        """|c_M| / max_n |c_n|."""
        return float(abs(self.values[-1]))

    def truncated(self, m: int) -> "ScaledCoefficients":
        if not 0 <= m <= self.m:
            raise ValueError(f"cannot truncate {self.m} coefficients at {m}")
        return ScaledCoefficients.from_exact(
            self.exact[: m + 1], self.alpha, self.params, self.parity, self.precision, self.alpha_ball
        )

    def at_precision(self, bits: int) -> "ScaledCoefficients":
        if bits <= self.precision:
            return self
        alpha = self.alpha_ball if self.alpha_ball is not None else self.alpha
        return coefficient_sequence(alpha, self.params, self.parity, self.m, precision=bits)


def _recurrence(alpha, params, parity, m, bits):
    """c_0..c_m and the boundary value f_m, all as arb balls at ``bits``.

    c_{k+1} = -r_k / ((k+1) g) with
    r_k = (k + s h) c_k + (alpha + g) c_{k-1} - s (-1)^k h sum_j w_j c_{k-j},
    w_j = (2 alpha)^j / j!, and f_m = r_m.
    """
    s = parity.sign
    with _workprec(bits):
        a = alpha if isinstance(alpha, arb) else arb(alpha)
        g = arb(params.g)
        h = arb(params.delta) / 2
        w = [arb(1)]
        for j in range(1, m + 1):
            w.append(w[-1] * (2 * a) / j)
        apg = a + g
        c = [arb(1), arb(0)]
        f = None
        for k in range(1, m + 1):
            conv = sum((w[j] * c[k - j] for j in range(1, k + 1)), c[k])
            sh = (-s if k % 2 == 0 else s) * h
            r = (k + s * h) * c[k] + apg * c[k - 1] + sh * conv
            if k == m:
                f = r
            else:
                c.append(-r / ((k + 1) * g))
    return c, f


def _weighted_accuracy_bits(c, alpha):
    """Correct bits of the coefficient vector, each c_n weighted by its reach.

    c_n multiplies (a^dag)^n exp(alpha a^dag)|0>, whose norm grows roughly like
    sqrt(n!) (1 + |alpha|)^n, so an error in a tiny late coefficient can still
    dominate the state.  Returns -log2(max_n rad_n w_n / max_n |c_n| w_n).
    """
    la = math.log1p(abs(alpha))
    logw = [0.5 * math.lgamma(n + 1.0) + n * la for n in range(len(c))]
    top = -math.inf
    err = -math.inf
    for x, lw in zip(c, logw):
        top = max(top, _ln_abs(x) + lw)
        rad = x.rad()
        if not rad.is_zero():
            err = max(err, float(rad.log().mid()) + lw)
    if err == -math.inf:
        return math.inf
    return (top - err) / LN2


def coefficient_sequence(
    alpha: float,
    params: ModelParams,
    parity: Parity,
    m: int,
    precision: int | None = None,
) -> ScaledCoefficients:
    """c_0..c_m at a given alpha (c_0 = 1, c_1 = 0).

    ``alpha`` may be a float or an arb ball (e.g. from ``polish_root``).  With
    an explicit ``precision`` a single pass is made; otherwise the precision
    doubles until the coefficient vector carries 64 correct bits in the
    weighted sense of ``_weighted_accuracy_bits``.
    """
    if m < 2:
        raise ValueError("truncation m must be >= 2")
    ball = alpha if isinstance(alpha, arb) else None
    alpha = _check_alpha(alpha)
    bits = precision or default_bits(alpha, m)
    while True:
        c, _ = _recurrence(ball if ball is not None else alpha, params, parity, m + 1, bits)
        c = c[: m + 1]
        if not all(x.is_finite() for x in c):
            raise NonFinite("coefficient recurrence produced a non-finite value")
        if precision or bits >= MAX_BITS or _weighted_accuracy_bits(c, alpha) >= 64:
            break
        bits *= 2
    return ScaledCoefficients.from_exact(c, alpha, params, parity, bits, ball)


def _residual_and_slope(a, params, parity, m):
    """f_m and df_m/dalpha by forward-mode differentiation of the recurrence."""
    s = parity.sign
    g = arb(params.g)
    h = arb(params.delta) / 2
    w = [arb(1)]
    dw = [arb(0)]
    for j in range(1, m + 1):
        w.append(w[-1] * (2 * a) / j)
        dw.append(2 * w[-2])
    apg = a + g
    c = [arb(1), arb(0)]
    dc = [arb(0), arb(0)]
    for k in range(1, m + 1):
        conv = c[k]
        dconv = dc[k]
        for j in range(1, k + 1):
            conv += w[j] * c[k - j]
            dconv += dw[j] * c[k - j] + w[j] * dc[k - j]
        sh = (-s if k % 2 == 0 else s) * h
        diag = k + s * h
        r = diag * c[k] + apg * c[k - 1] + sh * conv
        dr = diag * dc[k] + c[k - 1] + apg * dc[k - 1] + sh * dconv
        if k == m:
            return r, dr
        scale = -1 / ((k + 1) * g)
        c.append(r * scale)
        dc.append(dr * scale)


def polish_root(alpha: float, params: ModelParams, parity: Parity, m: int, bits: int = 256):
    """Newton-refine a root of f_m to ~``bits`` bits; returns an arb midpoint.

    A double-precision root is off by ~1e-16 relative, and the forward
    recurrence amplifies that through its growing solution (~g^-n), which
    swamps the late coefficients.  ``converged_coefficients`` picks the
    precision automatically.
    """
    alpha = _check_alpha(alpha)
    x = arb(alpha)
    # each Newton step roughly doubles the correct bits, so the working
    # precision can ramp up alongside
    work = 128
    for _ in range(64):
        work = min(2 * work, bits + 32)
        with _workprec(work):
            f, df = _residual_and_slope(x, params, parity, m)
            if df.mid().is_zero():
                break
            step = (f.mid() / df.mid()).mid()
            x = (x - step).mid()
            small = abs(step) <= arb(2) ** (-bits) * max(arb(1), abs(x))
        if small and work >= bits + 32:
            break
    if abs(x - arb(alpha)) > arb(1e-6) * max(arb(1), abs(arb(alpha))):
        # Newton wandered to another root; keep the bracketed value
        return arb(alpha)
    return x


def converged_coefficients(alpha: float, params: ModelParams, parity: Parity, m: int):
    """Coefficients at the root of f_m nearest ``alpha``, polished until stable.

    The polished root is given a radius equal to its last Newton tolerance, so
    the arb radii of the coefficients reflect the root error; precision
    doubles until the weighted accuracy reaches 64 bits.
    """
    bits = max(256, 64 * math.ceil((96 + m * math.log2(max(2.0, 1.0 / params.g))) / 64))
    while True:
        x = polish_root(alpha, params, parity, m, bits)
        with _workprec(bits):
            ball = x + arb(0, abs(x.mid()) * arb(2) ** (-bits + 2) + arb(2) ** (-bits + 2))
        coeffs = coefficient_sequence(ball, params, parity, m, precision=bits)
        if _weighted_accuracy_bits(coeffs.exact, alpha) >= 64 or bits >= MAX_BITS:
            return ScaledCoefficients.from_exact(
                coeffs.exact, coeffs.alpha, params, parity, coeffs.precision, x
            )
        bits *= 2


# ---------------------------------------------------------------------------
# Boundary function f_M(alpha)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryResidual:
    """Sign and natural-log magnitude of f_M(alpha)."""

    sign: int
    log_magnitude: float
    certified: bool = True
    precision: int = 0

    @property
    def log10_magnitude(self) -> float:
        return self.log_magnitude / math.log(10.0)


def _residual_from(value, bits):
    s = _sign(value)
    if s == 0:
        if value.is_zero():
            return BoundaryResidual(0, -math.inf, True, bits)
        mid = value.mid()
        fallback = 1 if mid > 0 else (-1 if mid < 0 else 0)
        return BoundaryResidual(fallback, _ln_abs(value), False, bits)
    return BoundaryResidual(s, _ln_abs(value), True, bits)


def boundary_residual(
    alpha: float, params: ModelParams, parity: Parity, m: int
) -> BoundaryResidual:
    """Evaluate f_m(alpha) through the recurrence itself (O(m^2) per call).

    The precision doubles until the sign is certain.
    """
    if m < 2:
        raise ValueError("truncation m must be >= 2")
    alpha = _check_alpha(alpha)
    bits = default_bits(alpha, m)
    while True:
        _, f = _recurrence(alpha, params, parity, m, bits)
        if not f.is_finite():
            raise NonFinite("boundary function is not finite")
        if f.is_zero() or _sign(f) != 0 or bits >= MAX_BITS:
            return _residual_from(f, bits)
        bits *= 2


class BoundaryPolynomial:
    """Coefficients (in powers of alpha) of every c_k and f_k for one sector.

    Building is O(M^3) once; evaluation is Horner, O(M).  The polynomials for
    c_k do not depend on the truncation, so one builder serves every M of an
    escalation.  The coefficients are arb balls, so each evaluation carries its
    own rigorous error radius; a sign that stays ambiguous triggers a rebuild at
    twice the precision.
    """

    def __init__(self, params: ModelParams, parity: Parity, bits: int = BUILD_BITS):
        self.params = params
        self.parity = parity
        self._reset(bits)

    def _reset(self, bits):
        self.bits = int(bits)
        self._c = [arb_poly([1]), arb_poly([0])]
        self._r = [None]
        self._w = [arb_poly([1])]

    @property
    def built_to(self) -> int:
        return len(self._r) - 1

    def extend(self, m: int):
        if m <= self.built_to:
            return
        s = self.parity.sign
        with _workprec(self.bits):
            g = arb(self.params.g)
            h = arb(self.params.delta) / 2
            x_plus_g = arb_poly([g, 1])
            while len(self._w) <= m:
                j = len(self._w)
                self._w.append(self._w[-1].left_shift(1) * (arb(2) / j))
            for k in range(len(self._r), m + 1):
                conv = self._c[k]
                for j in range(1, k + 1):
                    conv = conv + self._w[j] * self._c[k - j]
                sh = (-s if k % 2 == 0 else s) * h
                rk = (k + s * h) * self._c[k] + x_plus_g * self._c[k - 1] + sh * conv
                self._r.append(rk)
                self._c.append(rk * (-1 / ((k + 1) * g)))

    def coefficients(self, m: int) -> list[float]:
        """f_m as ascending coefficients in alpha (midpoints)."""
        if m < 2:
            raise ValueError("truncation m must be >= 2")
        self.extend(m)
        return [_to_float(x) for x in self._r[m].coeffs()]

    def c_polynomial(self, k: int) -> list[float]:
        self.extend(max(k, 2))
        return [_to_float(x) for x in self._c[k].coeffs()]

    def _value(self, alpha, m):
        with _workprec(self.bits):
            return self._r[m](arb(alpha))

    def evaluate(self, alpha: float, m: int) -> BoundaryResidual:
        if m < 2:
            raise ValueError("truncation m must be >= 2")
        alpha = _check_alpha(alpha)
        self.extend(m)
        while True:
            v = self._value(alpha, m)
            if v.is_zero() or _sign(v) != 0 or self.bits >= MAX_BITS:
                return _residual_from(v, self.bits)
            self._reset(self.bits * 2)
            self.extend(m)

    def sign(self, alpha: float, m: int) -> int:
        return self.evaluate(alpha, m).sign

    def sign_function(self, m: int):
        self.extend(m)
        return lambda alpha: self.evaluate(alpha, m).sign

    def signs(self, alphas, m: int) -> np.ndarray:
        """Certified signs of f_m at many points."""
        xs = [_check_alpha(x) for x in np.asarray(alphas, dtype=float)]
        self.extend(m)
        out = np.empty(len(xs), dtype=int)
        with _workprec(self.bits):
            poly = self._r[m]
            for i, x in enumerate(xs):
                out[i] = _sign(poly(arb(x)))
        for i in np.nonzero(out == 0)[0]:
            out[i] = self.evaluate(xs[i], m).sign
        return out


@functools.lru_cache(maxsize=64)
def _cached_polynomial(g, delta, sign):
    return BoundaryPolynomial(ModelParams(g, delta), Parity(sign))


def boundary_polynomial(params: ModelParams, parity: Parity) -> BoundaryPolynomial:
    """Shared builder per (g, delta, parity)."""
    return _cached_polynomial(params.g, params.delta, parity.sign)


# ---------------------------------------------------------------------------
# Fock-space reconstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FockVector:
    upper: np.ndarray
    lower: np.ndarray
    n_fock: int

    def as_state(self) -> np.ndarray:
        """Interleaved amplitudes on |n> x {up, down}, index 2n + spin."""
        out = np.empty(2 * (self.n_fock + 1))
        out[0::2] = self.upper
        out[1::2] = self.lower
        return out

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.upper**2) + np.sum(self.lower**2)))


def _fock_bits(alpha, coeffs, n_fock):
    """Bits lost to cancellation in sum_n c_n alpha^(m-n) sqrt(m!)/(m-n)!.

    The unnormalised upper component starts with c_0 = 1, so its norm is at
    least one and the largest single term bounds the loss.  Factorials enter
    through log-gamma.
    """
    logc = np.array([_ln_abs(x) for x in coeffs.exact])
    la = math.log(abs(alpha)) if alpha != 0 else None
    lg = np.array([math.lgamma(x + 1.0) for x in range(n_fock + 1)])
    best = 0.0
    for n, lc in enumerate(logc):
        if not np.isfinite(lc):
            continue
        if la is None:
            best = max(best, lc + 0.5 * lg[n])
            continue
        k = np.arange(n_fock - n + 1, dtype=float)
        t = lc + k * la + 0.5 * lg[n : n_fock + 1] - lg[: n_fock - n + 1]
        best = max(best, float(t.max()))
    return math.ceil(best / LN2)


def fock_expansion(
    alpha: float, coeffs: ScaledCoefficients, parity: Parity, n_fock: int
) -> FockVector:
    """Expand the two-component ansatz on Fock states |0>..|n_fock>.

    upper[m] = sqrt(m!) sum_n c_n alpha^(m-n) / (m-n)!   and
    lower[m] = parity * (-1)^m upper[m]; the result has unit norm.
    """
    if n_fock < coeffs.m:
        raise ValueError(f"n_fock={n_fock} is below the truncation m={coeffs.m}")
    alpha = _check_alpha(alpha)
    bits = 64 * math.ceil((96 + _fock_bits(alpha, coeffs, n_fock)) / 64)
    if coeffs.precision < bits:
        coeffs = coeffs.at_precision(bits)
    bits = max(bits, coeffs.precision)
    c = coeffs.exact
    mmax = coeffs.m
    with _workprec(bits):
        a = coeffs.alpha_ball if coeffs.alpha_ball is not None else arb(alpha)
        t = [arb(1)]
        for k in range(1, n_fock + 1):
            t.append(t[-1] * a / k)
        sqrt_fact = arb(1)
        upper = []
        for m in range(n_fock + 1):
            if m:
                sqrt_fact *= arb(m).sqrt()
            acc = c[0] * t[m]
            for n in range(1, min(m, mmax) + 1):
                acc += c[n] * t[m - n]
            upper.append(acc * sqrt_fact)
        big = max(abs(x.mid()) for x in upper)
        tail = upper[-min(4, n_fock + 1):]
        if any(abs(x.mid()) > FOCK_TAIL * big for x in tail):
            raise TruncationTooSmall(
                f"Fock tail at n_fock={n_fock} exceeds {FOCK_TAIL:g} of the peak amplitude"
            )
        norm = (2 * sum((x * x for x in upper), arb(0))).sqrt()
        up = np.array([_to_float(x / norm) for x in upper])
    signs = parity.sign * np.where(np.arange(n_fock + 1) % 2 == 0, 1.0, -1.0)
    return FockVector(up, signs * up, n_fock)

"""Complex Airy evaluation in factored (exponent, mantissa) form.

The first kind Airy function is represented as

    Ai(z) = exp(-xi(z)) * B(z),      xi(z) = (2/3) z^(3/2)  (principal branch),

and similarly Ai'(z) = exp(-xi(z)) * C(z).  Keeping (xi, B, C) separate makes
quotients like Ai(t + z)/Ai(z) computable far beyond the range where Ai itself
over- or underflows, which is what the boundary-layer machinery needs.

Evaluation strategy by region of the z-plane:

* |z| <= SERIES_RADIUS: Maclaurin series, summed in extended precision to
  absorb the exp(2 Re xi) cancellation near the positive real axis.
* |z| >= ASYMPTOTIC_RADIUS, |arg z| <= 2 pi/3: asymptotic expansion of the
  mantissa, truncated at the smallest term.
* SERIES_RADIUS < |z| < ASYMPTOTIC_RADIUS, |arg z| <= 2 pi/3: a rotated-contour
  quadrature of the Laplace-type integral for B(z).  Neither the double
  precision series nor the optimally truncated expansion reaches the target
  accuracy in this annulus, so the integral representation bridges the gap.
* |arg z| > 2 pi/3: the rotation identity
  Ai(-z) = e^{i pi/3} Ai(z e^{i pi/3}) + e^{-i pi/3} Ai(z e^{-i pi/3}),
  whose rotated arguments land back in the sector handled above.

All evaluators are vectorized over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

SERIES_RADIUS = 5.5
ASYMPTOTIC_RADIUS = 9.0
SECTOR = 2.0 * math.pi / 3.0
POLE_GUARD = 1e-6

# Ai(0) = 3^(-2/3)/Gamma(2/3) and -Ai'(0) = 3^(-1/3)/Gamma(1/3), to quad-ish
# precision so the extended-precision series is not limited by its constants.
_AI0 = np.longdouble("0.355028053887817239260063186004")
_AIP0 = np.longdouble("0.258819403792806798405183560189")

_TWO_THIRDS = 2.0 / 3.0


class AiryError(Exception):
    pass


class AiryOverflowError(AiryError):
    """Unfactored value would overflow; use the factored form instead."""


class AiryPoleError(AiryError):
    """Evaluation point is too close to a zero of Ai."""


class BranchCutError(AiryError):
    """Argument lies exactly on the branch cut arg z = pi."""


def xi(z):
    """Phase function (2/3) z^(3/2) on the principal branch.

    Raises BranchCutError if any argument lies exactly on the negative real
    axis, where the two branches of z^(1/2) meet.
    """
    arr = np.asarray(z, dtype=complex)
    on_cut = (arr.real < 0) & (arr.imag == 0)
    if np.any(on_cut):
        raise BranchCutError("xi is two-valued on the negative real axis")
    return _xi(arr) if arr.shape else complex(_xi(arr))


def _xi(z):
    # Continuous from above on the cut (arg(-1+0j) = +pi), which is the
    # convention used internally by the factored evaluators.
    return _TWO_THIRDS * z * np.sqrt(z)


@dataclass(frozen=True)
class AiryEval:
    """Factored Airy data at a set of points.

    value = exp(-xi) * mantissa, derivative = exp(-xi) * mantissa_deriv.
    """

    z: np.ndarray
    xi: np.ndarray
    mantissa: np.ndarray
    mantissa_deriv: np.ndarray

    @property
    def value(self):
        return self._unfactor(self.mantissa)

    @property
    def derivative(self):
        return self._unfactor(self.mantissa_deriv)

    @property
    def log_deriv(self):
        return self.mantissa_deriv / self.mantissa

    def _unfactor(self, mant):
        with np.errstate(over="raise"):
            try:
                scale = np.exp(-self.xi)
            except FloatingPointError:
                raise AiryOverflowError(
                    "exp(-xi) overflows double precision; keep the factored form"
                ) from None
        out = scale * mant
        if np.any(np.isinf(out)):
            raise AiryOverflowError(
                "unfactored Airy value overflows; keep the factored form"
            )
        return out


def _series_pair(z):
    """Maclaurin sums (Ai, Ai') in extended precision.

    Cancellation between the two fundamental solutions costs exp(2 Re xi)
    digits; 80-bit arithmetic keeps full double accuracy out to |z| ~ 6.
    """
    zl = z.astype(np.clongdouble)
    z3 = zl * zl * zl
    # Term recurrences: f, g solve w'' = z w with (f, f')(0) = (1, 0) and
    # (g, g')(0) = (0, 1); the primed series get their own ratios.
    f = np.ones_like(zl)
    g = zl.copy()
    gp = np.ones_like(zl)
    tf = np.ones_like(zl)
    tg = zl.copy()
    tgp = np.ones_like(zl)
    tfp = 0.5 * zl * zl
    fp = tfp.copy()
    for k in range(90):
        tf = tf * z3 / ((3 * k + 2) * (3 * k + 3))
        tg = tg * z3 / ((3 * k + 3) * (3 * k + 4))
        tgp = tgp * z3 / ((3 * k + 1) * (3 * k + 3))
        f += tf
        g += tg
        gp += tgp
        if k >= 1:
            tfp = tfp * z3 * (k + 1) / (k * (3 * k + 2) * (3 * k + 3))
            fp += tfp
        if max(
            np.max(np.abs(tf)), np.max(np.abs(tg)), np.max(np.abs(tgp))
        ) < 1e-28 * max(np.max(np.abs(f)), 1.0):
            break
    ai = _AI0 * f - _AIP0 * g
    aip = _AI0 * fp - _AIP0 * gp
    return ai, aip


_UK_COUNT = 60


def _asym_coeffs():
    u = np.empty(_UK_COUNT)
    v = np.empty(_UK_COUNT)
    u[0] = 1.0
    v[0] = 1.0
    for k in range(_UK_COUNT - 1):
        u[k + 1] = (
            u[k] * (6 * k + 5) * (6 * k + 3) * (6 * k + 1) / (216.0 * (k + 1) * (2 * k + 1))
        )
        v[k + 1] = u[k + 1] * (6 * (k + 1) + 1) / (1.0 - 6 * (k + 1))
    return u, v


_UK, _VK = _asym_coeffs()
_B0 = 0.5 / math.sqrt(math.pi)


def _asym_pair(z, xiz):
    """Mantissas from the large-|z| expansion, truncated at the smallest term.

    Valid (to within ~2x the first omitted term) for |arg z| <= 2 pi/3.
    """
    inv_xi = 1.0 / xiz
    sb = np.ones_like(z)
    sc = np.ones_like(z)
    term = np.ones_like(z)
    live = np.ones(z.shape, dtype=bool)
    prev = np.full(z.shape, np.inf)
    for k in range(1, _UK_COUNT):
        term = term * (-inv_xi)
        mag = np.abs(term) * _UK[k]
        live &= mag < prev
        prev = np.where(live, mag, prev)
        sb[live] += term[live] * _UK[k]
        sc[live] += term[live] * _VK[k]
        if not live.any():
            break
    zq = z ** 0.25
    return _B0 * sb / zq, -_B0 * sc * zq


_QUAD_NODES = 24
_QUAD_PANELS = 9


def _quad_rules():
    x, w = np.polynomial.legendre.leggauss(_QUAD_NODES)
    nodes = []
    weights = []
    for p in range(_QUAD_PANELS):
        nodes.append(0.5 * (x + 1.0) + p)
        weights.append(0.5 * w)
    return np.concatenate(nodes), np.concatenate(weights)


_QS, _QW = _quad_rules()


def _laplace_moments(u):
    """(Q0, Q2) with Q_p(u) = integral_0^inf s^p exp(-u s^2 - s^3/3) ds."""
    s = _QS[:, None]
    w = _QW[:, None]
    e = np.exp(-u[None, :] * s * s - s * s * s / 3.0)
    q0 = np.sum(w * e, axis=0)
    q2 = np.sum(w * s * s * e, axis=0)
    return q0, q2


_ROT = np.exp(1j * math.pi / 3.0)


def _quad_pair(z):
    """Mantissas via the rotated-contour Laplace integrals.

    B(z) = (1/pi) * Int_0^inf exp(-t^2 sqrt(z)) cos(t^3/3) dt, with the two
    half-oscillations rotated by +-pi/6 so the integrand decays like
    exp(-s^3/3).  Needs |arg z| <= 2 pi/3 so that Re sqrt(z) stays positive.
    """
    w = np.sqrt(z)
    q0p, q2p = _laplace_moments(_ROT * w)
    q0m, q2m = _laplace_moments(w / _ROT)
    r6 = np.exp(1j * math.pi / 6.0)
    i0 = 0.5 * (r6 * q0p + np.conj(r6) * q0m)
    i2 = 0.5j * (q2p - q2m)
    b = i0 / math.pi
    db = -i2 / (2.0 * w * math.pi)
    c = -w * b + db
    return b, c


def airy_factored(z) -> AiryEval:
    """Evaluate Ai and Ai' in factored form everywhere in the plane."""
    arr = np.asarray(z, dtype=complex)
    flat = arr.ravel()
    n = flat.size
    xiz = _xi(flat)
    mant = np.empty(n, dtype=complex)
    mder = np.empty(n, dtype=complex)

    r = np.abs(flat)
    theta = np.angle(flat)
    in_sector = np.abs(theta) <= SECTOR
    m_series = r <= SERIES_RADIUS
    m_asym = (~m_series) & in_sector & (r >= ASYMPTOTIC_RADIUS)
    m_quad = (~m_series) & in_sector & (r < ASYMPTOTIC_RADIUS)
    m_conn = (~m_series) & ~in_sector

    if m_series.any():
        ai, aip = _series_pair(flat[m_series])
        scale = np.exp(xiz[m_series].astype(np.clongdouble))
        mant[m_series] = (ai * scale).astype(complex)
        mder[m_series] = (aip * scale).astype(complex)
    if m_asym.any():
        b, c = _asym_pair(flat[m_asym], xiz[m_asym])
        mant[m_asym] = b
        mder[m_asym] = c
    if m_quad.any():
        b, c = _quad_pair(flat[m_quad])
        mant[m_quad] = b
        mder[m_quad] = c
    if m_conn.any():
        zneg = -flat[m_conn]  # |arg| < pi/3
        ep = airy_factored(zneg * _ROT)
        em = airy_factored(zneg / _ROT)
        x0 = xiz[m_conn]
        # Ai(z) = e^{i pi/3} Ai_+ + e^{-i pi/3} Ai_-, evaluated in mantissa
        # form: exponent differences stay moderate near the cut.
        r3 = np.exp(1j * math.pi / 3.0)
        mant[m_conn] = r3 * np.exp(x0 - ep.xi) * ep.mantissa + np.conj(r3) * np.exp(
            x0 - em.xi
        ) * em.mantissa
        mder[m_conn] = -(r3 ** 2) * np.exp(x0 - ep.xi) * ep.mantissa_deriv - np.conj(
            r3 ** 2
        ) * np.exp(x0 - em.xi) * em.mantissa_deriv

    return AiryEval(
        z=flat.reshape(arr.shape),
        xi=xiz.reshape(arr.shape),
        mantissa=mant.reshape(arr.shape),
        mantissa_deriv=mder.reshape(arr.shape),
    )


def airy(z, k: int = 0):
    """Ai^(k)(z).  Orders k >= 2 come from the differentiated equation

        Ai^(k+2)(z) = z Ai^(k)(z) + k Ai^(k-1)(z).

    Raises AiryOverflowError when the unfactored value exceeds double range.
    """
    if k < 0:
        raise ValueError("derivative order must be >= 0")
    ev = airy_factored(z)
    a0 = ev.value
    if k == 0:
        return a0
    a1 = ev.derivative
    if k == 1:
        return a1
    zz = np.asarray(z, dtype=complex)
    derivs = [a0, a1]
    for j in range(k - 1):
        nxt = zz * derivs[j]
        if j >= 1:
            nxt = nxt + j * derivs[j - 1]
        derivs.append(nxt)
    return derivs[k]


def deriv_ratio(z, k: int):
    """Ai^(k)(z)/Ai(z), computed without leaving mantissa space."""
    ev = airy_factored(z)
    _pole_check(ev)
    g0 = np.ones_like(ev.mantissa)
    if k == 0:
        return g0
    g1 = ev.log_deriv
    if k == 1:
        return g1
    zz = np.asarray(z, dtype=complex)
    ratios = [g0, g1]
    for j in range(k - 1):
        nxt = zz * ratios[j]
        if j >= 1:
            nxt = nxt + j * ratios[j - 1]
        ratios.append(nxt)
    return ratios[k]


def _pole_check(ev: AiryEval):
    # Near a zero of Ai the mantissa collapses relative to its envelope
    # |z|^(-1/4); zeros only occur on the negative real axis.
    env = np.abs(ev.mantissa) * (np.abs(ev.z) + 1.0) ** 0.25 / _B0
    near = env < 1e-10
    if np.any(near):
        raise AiryPoleError("evaluation point is numerically at a zero of Ai")
    z = np.asarray(ev.z, dtype=complex)
    candidates = (np.abs(z.imag) < POLE_GUARD) & (z.real < -1.0)
    if np.any(candidates):
        x = z[candidates].real
        j = np.maximum(1, np.rint((((-x) ** 1.5) * 2.0 / (3.0 * math.pi)) + 0.25).astype(int))
        for jj, zz in zip(np.atleast_1d(j), np.atleast_1d(z[candidates])):
            for cand in (jj - 1, jj, jj + 1):
                if cand >= 1 and abs(zz - airy_zero(int(cand))) < POLE_GUARD:
                    raise AiryPoleError(
                        f"z within {POLE_GUARD} of Airy zero #{int(cand)}"
                    )


def log_deriv(z):
    """F(z) = Ai'(z)/Ai(z), with a guard against the poles at Airy zeros."""
    ev = airy_factored(z)
    _pole_check(ev)
    out = ev.log_deriv
    return out if np.asarray(z).shape else complex(out)


def psi(t, z, k: int = 0):
    """Ratio Ai^(k)(t + z)/Ai(z), stable for large real shifts t >= 0.

    Broadcasts over t and z.  The exponent difference xi(z) - xi(t+z) has
    nonpositive real part for t >= 0, so no overflow occurs on the way out.
    """
    tt = np.asarray(t, dtype=float)
    zz = np.asarray(z, dtype=complex)
    ws = tt + zz
    ev_z = airy_factored(zz)
    _pole_check(ev_z)
    ev_w = airy_factored(ws)
    ratio = np.exp(ev_z.xi - ev_w.xi) * (ev_w.mantissa / ev_z.mantissa)
    if k == 0:
        out = ratio
    else:
        gk = _ratio_orders(ws, ev_w, k)
        out = ratio * gk
    return out if out.shape else complex(out)


def _ratio_seq(w, ev_w: AiryEval, kmax: int):
    g0 = np.ones_like(ev_w.mantissa)
    seq = [g0]
    if kmax >= 1:
        seq.append(ev_w.log_deriv)
    for j in range(kmax - 1):
        nxt = w * seq[j]
        if j >= 1:
            nxt = nxt + j * seq[j - 1]
        seq.append(nxt)
    return seq


def _ratio_orders(w, ev_w: AiryEval, k: int):
    return _ratio_seq(w, ev_w, k)[k]


def psi_ladder(t, z, kmax: int, ev_z: AiryEval | None = None):
    """All ratios Ai^(k)(t + z)/Ai(z) for k = 0..kmax in one evaluation.

    The denominator data can be passed in when z is fixed across many t
    slices.  Returns a list of kmax+1 arrays broadcast over (t, z).
    """
    tt = np.asarray(t, dtype=float)
    zz = np.asarray(z, dtype=complex)
    ws = tt + zz
    if ev_z is None:
        ev_z = airy_factored(zz)
        _pole_check(ev_z)
    ev_w = airy_factored(ws)
    base = np.exp(ev_z.xi - ev_w.xi) * (ev_w.mantissa / ev_z.mantissa)
    seq = _ratio_seq(ws, ev_w, kmax)
    return [base * g for g in seq]


def airy_rotated(z, sign: int) -> AiryEval:
    """Factored data for Ai(z e^{+- i pi/3}) (sign = +1 or -1)."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    return airy_factored(np.asarray(z, dtype=complex) * (_ROT if sign > 0 else 1.0 / _ROT))


# ---------------------------------------------------------------------------
# Polynomials Phi_k(F, z) with Ai(z) * d^k/dz^k (1/Ai(z)) = Phi_k(F(z), z).
# The generating recursion is Phi_k = d/dz Phi_{k-1} - F Phi_{k-1} with
# F' = z - F^2, which keeps every coefficient an exact rational number.
# ---------------------------------------------------------------------------


class PhiPolynomial:
    """Bivariate polynomial in (F, z) with exact rational coefficients."""

    def __init__(self, coeffs: dict[tuple[int, int], Fraction]):
        self.coeffs = {key: Fraction(val) for key, val in coeffs.items() if val != 0}

    def __eq__(self, other):
        return isinstance(other, PhiPolynomial) and self.coeffs == other.coeffs

    def degree_f(self) -> int:
        return max((i for (i, _) in self.coeffs), default=0)

    def differentiate(self) -> "PhiPolynomial":
        out: dict[tuple[int, int], Fraction] = {}
        for (i, j), c in self.coeffs.items():
            if i:
                # d/dz F^i = i F^{i-1} (z - F^2)
                _acc(out, (i - 1, j + 1), i * c)
                _acc(out, (i + 1, j), -i * c)
            if j:
                _acc(out, (i, j - 1), j * c)
        return PhiPolynomial(out)

    def times_f(self) -> "PhiPolynomial":
        return PhiPolynomial({(i + 1, j): c for (i, j), c in self.coeffs.items()})

    def __sub__(self, other):
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            _acc(out, key, -c)
        return PhiPolynomial(out)

    def __call__(self, f, z):
        f = np.asarray(f, dtype=complex)
        z = np.asarray(z, dtype=complex)
        total = np.zeros(np.broadcast(f, z).shape, dtype=complex)
        for (i, j), c in self.coeffs.items():
            total = total + float(c) * f ** i * z ** j
        return total

    def __repr__(self):
        items = ", ".join(f"F^{i} z^{j}: {c}" for (i, j), c in sorted(self.coeffs.items()))
        return f"PhiPolynomial({{{items}}})"


def _acc(d, key, val):
    d[key] = d.get(key, Fraction(0)) + val
    if d[key] == 0:
        del d[key]


_PHI_CACHE: list[PhiPolynomial] = [PhiPolynomial({(0, 0): Fraction(1)})]


def phi_poly(k: int) -> PhiPolynomial:
    """Exact polynomial identity for Ai * (1/Ai)^(k)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    while len(_PHI_CACHE) <= k:
        prev = _PHI_CACHE[-1]
        _PHI_CACHE.append(prev.differentiate() - prev.times_f())
    return _PHI_CACHE[k]


def phi_eval(k: int, z):
    """Numerical value of Ai(z) * d^k/dz^k (1/Ai(z))."""
    f = log_deriv(z)
    return phi_poly(k)(f, np.asarray(z, dtype=complex))


# ---------------------------------------------------------------------------
# Zeros of Ai on the negative real axis.
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4096)
def airy_zero(j: int) -> float:
    """j-th zero of Ai (j = 1, 2, ...), a negative real number."""
    if j < 1:
        raise ValueError("zero index starts at 1")
    x = -((3.0 * math.pi * (4 * j - 1) / 8.0) ** _TWO_THIRDS)
    for _ in range(60):
        ev = airy_factored(x)
        step = (ev.mantissa / ev.mantissa_deriv).real
        x_new = x - step
        if not np.isfinite(x_new):
            break
        if abs(x_new - x) < 1e-14 * abs(x):
            x = x_new
            break
        x = x_new
    return float(x)


def airy_zeros(n: int) -> np.ndarray:
    return np.array([airy_zero(j) for j in range(1, n + 1)])


# ---------------------------------------------------------------------------
# Growth-envelope ratio reports.  Each entry measures sup of |quantity| divided
# by its proven envelope; the theory guarantees a finite sup, so the measured
# max must stay bounded under grid refinement.
# ---------------------------------------------------------------------------


_RING = np.exp(2j * math.pi * np.arange(32) / 32)


def _cauchy_deriv(fn, z, order: int, radius):
    """order-th z-derivative of fn by the discrete Cauchy mean on a ring."""
    if order == 0:
        return fn(z)
    r = np.broadcast_to(radius, z.shape)
    ring = z[..., None] + r[..., None] * _RING
    vals = fn(ring)
    mean = np.mean(vals * _RING ** (-order), axis=-1)
    return math.factorial(order) * mean / r ** order


def bound_report(n_radial: int = 20, n_angular: int = 48) -> dict:
    """Max ratios of Airy-quotient quantities to their growth envelopes.

    Envelopes: with w(z) = |z|^(1/2) + 1/|Im z|,
      logderiv_k:   |F^(k)(z)|           vs |Im z|^(-k) w(z)
      ratio0_k_l:   |d_z^l Psi_k(0, z)|  vs |Im z|^(-l) w(z)^k
      ratio_t_k_l:  |d_z^l Psi_k(t, z)|  vs |Im z|^(-l) w(z)^(k+1), t > 0
      ratio_far_k_l: t >= |z| adds the decay factor exp(-sqrt(t) |Im z|/4)
                    and tangential growth (sqrt(t) + 1/|Im z|)^k
      mod_plus:     |Ai(z)| exp(+Re xi)  vs <z>^(-1/4)
      mod_minus:    1/|Ai(z)| exp(-Re xi) vs <z>^(-1/4) w(z)
    """
    radii = np.geomspace(0.2, 20.0, n_radial)
    angles = np.linspace(-math.pi, math.pi, n_angular, endpoint=False) + 0.013
    z = (radii[:, None] * np.exp(1j * angles[None, :])).ravel()
    z = z[np.abs(z.imag) > 1e-3]
    w = np.sqrt(np.abs(z)) + 1.0 / np.abs(z.imag)
    rad = 0.5 * np.abs(z.imag)

    report = {}
    for k in range(4):
        fk = _cauchy_deriv(log_deriv, z, k, rad)
        report[f"logderiv_{k}"] = float(
            np.max(np.abs(fk) * np.abs(z.imag) ** k / w)
        )
    for k in range(3):
        for ell in range(3):
            d0 = _cauchy_deriv(lambda u: psi(0.0, u, k), z, ell, rad)
            report[f"ratio0_{k}_{ell}"] = float(
                np.max(np.abs(d0) * np.abs(z.imag) ** ell / w ** k)
            )
            t_mid = 0.5 * np.abs(z)
            dm = _cauchy_deriv(lambda u: psi(t_mid_b(u, t_mid, z), u, k), z, ell, rad)
            report[f"ratio_t_{k}_{ell}"] = float(
                np.max(np.abs(dm) * np.abs(z.imag) ** ell / w ** (k + 1))
            )
            t_far = 2.0 * np.abs(z) + 1.0
            df = _cauchy_deriv(lambda u: psi(t_mid_b(u, t_far, z), u, k), z, ell, rad)
            wf = (np.sqrt(t_far) + 1.0 / np.abs(z.imag)) ** k
            decay = np.exp(-np.sqrt(t_far) * np.abs(z.imag) / 4.0)
            report[f"ratio_far_{k}_{ell}"] = float(
                np.max(np.abs(df) * np.abs(z.imag) ** ell / (w * wf * decay))
            )
    ev = airy_factored(z)
    zb = (1.0 + np.abs(z) ** 2) ** 0.25
    report["mod_plus"] = float(np.max(np.abs(ev.mantissa) * zb))
    report["mod_minus"] = float(np.max(zb / (np.abs(ev.mantissa) * w)))
    return report


def t_mid_b(u, t, z):
    """Broadcast helper: tie the t sample to the base point of each ring."""
    extra = u.ndim - t.ndim
    return t.reshape(t.shape + (1,) * extra) if extra else t


# ---------------------------------------------------------------------------
# Self test used by the command line front end.
# ---------------------------------------------------------------------------


def self_test(n_radial: int = 24, n_angular: int = 64, perturb_b0: float = 0.0) -> dict:
    """Run the internal consistency checks on a polar grid over |z| <= 20.

    Returns a report dict with per-check worst ratios; report["ok"] is False
    if any check exceeds its tolerance.  perturb_b0 injects a relative error
    into the leading asymptotic coefficient (a fault hook for testing the
    test).
    """
    radii = np.linspace(0.15, 20.0, n_radial)
    angles = np.linspace(-math.pi + 1e-3, math.pi - 1e-3, n_angular)
    zs = (radii[:, None] * np.exp(1j * angles[None, :])).ravel()

    global _B0
    b0_saved = _B0
    _B0 = b0_saved * (1.0 + perturb_b0)
    try:
        ev = airy_factored(zs)
        evp = airy_factored(-zs)
        ep = airy_factored(zs * _ROT)
        em = airy_factored(zs / _ROT)
    finally:
        _B0 = b0_saved

    # Rotation identity, residual relative to the dominant term.
    r3 = np.exp(1j * math.pi / 3.0)
    t1 = r3 * np.exp(evp.xi - ep.xi) * ep.mantissa
    t2 = np.conj(r3) * np.exp(evp.xi - em.xi) * em.mantissa
    dom = np.maximum(np.abs(t1), np.abs(t2))
    dom = np.maximum(dom, np.abs(evp.mantissa))
    conn = np.abs(evp.mantissa - t1 - t2) / np.maximum(dom, 1e-300)

    # Reflection symmetry.
    evc = airy_factored(np.conj(zs))
    refl = np.abs(evc.mantissa - np.conj(ev.mantissa)) / np.maximum(
        np.abs(ev.mantissa), 1e-300
    )

    # Derivative consistency via a Cauchy circle of radius 1/2: the discrete
    # mean of f(z + r e_j)/(r e_j) over roots of unity recovers f'(z).
    nodes = np.exp(2j * math.pi * np.arange(32) / 32)
    sub = zs[:: max(1, zs.size // 400)]
    ev_sub = airy_factored(sub)
    ring = airy_factored(sub[:, None] + 0.5 * nodes[None, :])
    vals = np.exp(ev_sub.xi[:, None] - ring.xi) * ring.mantissa
    d1 = np.mean(vals / (0.5 * nodes[None, :]), axis=1)
    d1_err = np.abs(d1 - ev_sub.mantissa_deriv) / np.maximum(
        np.abs(ev_sub.mantissa), 1e-300
    )

    report = {
        "rotation_identity_max": float(conn.max()),
        "reflection_max": float(refl.max()),
        "cauchy_derivative_max": float(d1_err.max()),
        "zero_1": airy_zero(1),
        "zero_2": airy_zero(2),
    }
    report["ok"] = bool(
        report["rotation_identity_max"] < 1e-9
        and report["reflection_max"] < 1e-12
        and report["cauchy_derivative_max"] < 1e-9
        and abs(report["zero_1"] + 2.338107410459767) < 1e-9
        and abs(report["zero_2"] + 4.087949444130971) < 1e-9
    )
    return report

"""Oscillatory-regime parametrix: complex phase and amplitude expansions.

Away from the tangential threshold the field is a one-sided WKB wave

    u2 = Op_h( phi_cut(t / (delta1 |rho|^2)) * a * exp(i phi / h) ) f,

where rho(y, eta1) is the decaying branch of rho^2 + eta1 + i mu q = 0,
the phase phi = sum_{k=1}^{M} t^k phi_k(y, eta1) solves a complex eikonal
equation degree by degree in t, and the amplitude a = sum h^k t^nu a_{k,nu}
solves a triangular transport hierarchy.  All book-keeping runs through
bigraded (h^k, t^nu) series whose coefficients are (n, n) grids over
(y, eta1); products that spill past the tracked order accumulate into a
magnitude bucket so truncation error stays auditable.

The boundary trace of u2 is exactly Op_h(phi2) f by construction (the
amplitude at t = 0 is the frequency cutoff phi2 itself), and the normal
derivative comes out as a one-line symbol, rho * phi2 - i h sum_k h^k
a_{k,1}.  Combined with the tangential-layer field this yields the full
interior parametrix and its Dirichlet-to-Neumann approximation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import airy_layer as _layer
from .airy_layer import INNER_CUT, OUTER_CUT
from .fields import Field, apply_p0, field_norms
from .params import SpectralParams
from .symbols import (
    CutoffSpec,
    GridSymbol,
    ModeFunction,
    _basis,
    bump,
    eta_derivative,
    mode_numbers,
    quantize_matrix,
)

__all__ = [
    "THSeries",
    "PhaseExpansion",
    "WkbAmplitudes",
    "branch_rho",
    "solve_branch_rho",
    "solve_eikonal",
    "build_c_series",
    "solve_transport",
    "assemble_u2",
    "dn_g2",
    "residual_g2",
    "frequency_split",
    "dn_parametrix",
    "combine_parametrix",
]


def _dy(arr: np.ndarray) -> np.ndarray:
    """Spectral d/dy along axis 0 (rows are the periodic y-grid)."""
    n = arr.shape[0]
    m = mode_numbers(n)
    return np.fft.ifft(np.fft.fft(arr, axis=0) * (1j * m[:, None]), axis=0)


# ---------------------------------------------------------------------------
# decaying square-root branch


def branch_rho(eta1, mu: float, q_values) -> np.ndarray:
    """Root of rho^2 + eta1 + i mu q = 0 with Im rho > 0.

    rho = i sqrt(eta1 + i mu q) with the principal square root; since
    mu != 0 and q > 0 the radicand never touches the branch cut, so rho
    depends smoothly on (y, eta1) and Im rho = Re sqrt(...) > 0.
    """
    if mu == 0.0:
        raise ValueError("branch undefined at mu = 0: the radicand hits the cut")
    zeta = np.asarray(eta1, dtype=complex) + 1j * mu * np.asarray(q_values)
    rho = 1j * np.sqrt(zeta)
    if np.min(rho.imag) <= 0.0:
        raise RuntimeError("decaying branch lost: Im rho <= 0 on the grid")
    return rho


def solve_branch_rho(params: SpectralParams, q: GridSymbol) -> GridSymbol:
    """Branch rho on the (y, eta1) grid of q."""
    n = q.n
    eta1 = params.h * mode_numbers(n)[None, :] * np.ones((n, 1))
    return GridSymbol(branch_rho(eta1, params.mu, q.values.real), params.h)


# ---------------------------------------------------------------------------
# bigraded (h, t) series


class THSeries:
    """Polynomial sum_{k,nu} h^k t^nu C_{k,nu} with (n, n) grid coefficients.

    Terms with k + nu <= order are stored exactly; anything produced past
    the cap is folded into `tail`, a dict of max-abs magnitudes keyed by
    (k, nu).  The tail is a truncation audit, not a certified bound: it
    records the size of each dropped coefficient at the moment it was
    dropped and is carried through sums, products, and shifts by magnitude
    arithmetic only.
    """

    __slots__ = ("n", "order", "terms", "tail")

    def __init__(self, n: int, order: int):
        self.n = n
        self.order = order
        self.terms: dict[tuple[int, int], np.ndarray] = {}
        self.tail: dict[tuple[int, int], float] = {}

    def add(self, k: int, nu: int, grid) -> None:
        grid = np.asarray(grid, dtype=complex)
        if grid.shape != (self.n, self.n):
            grid = grid * np.ones((self.n, self.n))
        if k + nu <= self.order:
            key = (k, nu)
            if key in self.terms:
                self.terms[key] = self.terms[key] + grid
            else:
                self.terms[key] = grid
        else:
            self._tail_add(k, nu, float(np.max(np.abs(grid))))

    def _tail_add(self, k: int, nu: int, mag: float) -> None:
        if mag > 0.0:
            self.tail[(k, nu)] = self.tail.get((k, nu), 0.0) + mag

    def coeff(self, k: int, nu: int) -> np.ndarray:
        return self.terms.get((k, nu), np.zeros((self.n, self.n), dtype=complex))

    def copy(self) -> "THSeries":
        out = THSeries(self.n, self.order)
        out.terms = {key: val.copy() for key, val in self.terms.items()}
        out.tail = dict(self.tail)
        return out

    def __add__(self, other: "THSeries") -> "THSeries":
        out = THSeries(self.n, min(self.order, other.order))
        for src in (self, other):
            for (k, nu), val in src.terms.items():
                out.add(k, nu, val)
            for (k, nu), mag in src.tail.items():
                out._tail_add(k, nu, mag)
        return out

    def scaled(self, factor) -> "THSeries":
        """Multiply every coefficient by a scalar or an (n, n) grid."""
        out = THSeries(self.n, self.order)
        fmax = float(np.max(np.abs(factor)))
        for key, val in self.terms.items():
            out.terms[key] = val * factor
        for key, mag in self.tail.items():
            out._tail_add(*key, mag * fmax)
        return out

    def mul(self, other: "THSeries") -> "THSeries":
        """Graded product; spills and operand tails land in the tail."""
        out = THSeries(self.n, min(self.order, other.order))
        for (k1, n1), v1 in self.terms.items():
            for (k2, n2), v2 in other.terms.items():
                out.add(k1 + k2, n1 + n2, v1 * v2)
        omax = {key: float(np.max(np.abs(val))) for key, val in other.terms.items()}
        smax = {key: float(np.max(np.abs(val))) for key, val in self.terms.items()}
        for (k1, n1), m1 in self.tail.items():
            for (k2, n2), m2 in omax.items():
                out._tail_add(k1 + k2, n1 + n2, m1 * m2)
        for (k2, n2), m2 in other.tail.items():
            for (k1, n1), m1 in smax.items():
                out._tail_add(k1 + k2, n1 + n2, m1 * m2)
            for (k1, n1), m1 in self.tail.items():
                out._tail_add(k1 + k2, n1 + n2, m1 * m2)
        return out

    def dy(self) -> "THSeries":
        out = THSeries(self.n, self.order)
        for key, val in self.terms.items():
            out.terms[key] = _dy(val)
        out.tail = dict(self.tail)
        return out

    def dt(self) -> "THSeries":
        out = THSeries(self.n, self.order)
        for (k, nu), val in self.terms.items():
            if nu >= 1:
                out.add(k, nu - 1, nu * val)
        for (k, nu), mag in self.tail.items():
            if nu >= 1:
                out._tail_add(k, nu - 1, nu * mag)
        return out

    def h_shift(self, b: int = 1) -> "THSeries":
        out = THSeries(self.n, self.order)
        for (k, nu), val in self.terms.items():
            out.add(k + b, nu, val)
        for (k, nu), mag in self.tail.items():
            out._tail_add(k + b, nu, mag)
        return out

    def h_unshift(self) -> "THSeries":
        """Divide by h; the k = 0 row must already be empty."""
        ref = self.max_abs()
        out = THSeries(self.n, max(self.order - 1, 0))
        for (k, nu), val in self.terms.items():
            if k == 0:
                if np.max(np.abs(val)) > 1e-12 * max(ref, 1e-300):
                    raise RuntimeError(
                        "h-division of a series with a nonzero h^0 row "
                        "(induction-order violation)"
                    )
                continue
            out.add(k - 1, nu, val)
        for (k, nu), mag in self.tail.items():
            if k == 0:
                continue
            out._tail_add(k - 1, nu, mag)
        return out

    def drop_k0(self) -> "THSeries":
        out = THSeries(self.n, self.order)
        out.terms = {key: val for key, val in self.terms.items() if key[0] > 0}
        out.tail = {key: mag for key, mag in self.tail.items() if key[0] > 0}
        return out

    def k0_row(self) -> "THSeries":
        out = THSeries(self.n, self.order)
        out.terms = {key: val for key, val in self.terms.items() if key[0] == 0}
        return out

    def evaluate(self, t: float, h: float) -> np.ndarray:
        total = np.zeros((self.n, self.n), dtype=complex)
        for (k, nu), val in self.terms.items():
            total = total + (h**k * t**nu) * val
        return total

    def tail_at(self, t: float, h: float) -> float:
        return float(sum(h**k * t**nu * mag for (k, nu), mag in self.tail.items()))

    def max_abs(self) -> float:
        if not self.terms:
            return 0.0
        return max(float(np.max(np.abs(val))) for val in self.terms.values())

    def key_max(self) -> dict:
        return {key: float(np.max(np.abs(val))) for key, val in self.terms.items()}


def t_series(n: int, order: int, coeffs: dict[int, np.ndarray]) -> THSeries:
    """Pure t-polynomial (k = 0 rows) as a THSeries."""
    out = THSeries(n, order)
    for nu, grid in coeffs.items():
        out.add(0, nu, grid)
    return out


# ---------------------------------------------------------------------------
# eikonal hierarchy


@dataclass
class PhaseExpansion:
    """Complex phase sum_k t^k phi_k (k = 1..M+1) and its derived data.

    phi[j] holds the coefficient of t^(j+1); dyphi its y-derivative.  The
    last entry is a guard coefficient: carrying phi_{M+1} makes every
    realized eikonal coefficient eik[K] vanish to round-off for K <= M,
    so the residue starts at t^(M+1).  delta1 fixes the working depth
    t <= delta1 |rho|^2, halved from the default until the decay barrier
    Im phi >= t Im rho / 2 holds pointwise on that range.
    """

    params: SpectralParams
    q: GridSymbol
    rho: np.ndarray
    phi: list
    dyphi: list
    eik: list
    dq_eta: list
    delta1: float

    @property
    def n(self) -> int:
        return self.q.n

    def phase_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        total = np.zeros(np.broadcast_shapes(t.shape, self.rho.shape), dtype=complex)
        for j in range(len(self.phi) - 1, -1, -1):
            total = (total + self.phi[j]) * t
        return total

    def dphase_dt(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        total = np.zeros(np.broadcast_shapes(t.shape, self.rho.shape), dtype=complex)
        for j in range(len(self.phi) - 1, 0, -1):
            total = total * t + (j + 1) * self.phi[j]
        return total * t + self.phi[0]

    def imag_barrier_margin(self, samples: int = 20) -> float:
        """min over the working depth of Im phi - t Im rho / 2 (>= 0)."""
        rho2 = np.abs(self.rho) ** 2
        worst = np.inf
        for s in np.linspace(1.0 / samples, 1.0, samples):
            t = s * self.delta1 * rho2
            gap = self.phase_at(t).imag - 0.5 * t * self.rho.imag
            worst = min(worst, float(np.min(gap)))
        return worst

    def report(self) -> dict:
        """Empirical decay ratios of the coefficient ladder.

        weight_full[k] tracks |phi_k| |rho|^(2k-3) and weight_imag[k]
        tracks |Im phi_k| |rho|^(2k-2) / Im rho; both should stay O(1)
        across the grid.
        """
        absrho = np.abs(self.rho)
        full, imag = [], []
        for j, p in enumerate(self.phi):
            k = j + 1
            full.append(float(np.max(np.abs(p) * absrho ** (2 * k - 3))))
            imag.append(float(np.max(np.abs(p.imag) * absrho ** (2 * k - 2) / self.rho.imag)))
        resid = [float(np.max(np.abs(e))) for e in self.eik]
        return {
            "delta1": self.delta1,
            "weight_full": full,
            "weight_imag": imag,
            "eikonal_coeff_max": resid,
            "barrier_margin": self.imag_barrier_margin(),
        }


def _eta_ladder(sym: GridSymbol, order: int) -> list:
    """[sym, d_eta sym, ...] up to `order`; length 1 if eta-independent."""
    vals = np.asarray(sym.values, dtype=complex)
    out = [vals]
    if order >= 1:
        d1 = eta_derivative(sym, 1)
        if np.max(np.abs(d1)) > 1e-10 * max(np.max(np.abs(vals)), 1.0):
            out.append(d1)
            for a in range(2, order + 1):
                out.append(eta_derivative(sym, a))
    return out


def _poly_mul(pa: dict, pb: dict, deg: int) -> dict:
    out: dict[int, np.ndarray] = {}
    for da, ca in pa.items():
        for db, cb in pb.items():
            d = da + db
            if d <= deg:
                out[d] = out.get(d, 0.0) + ca * cb
    return out


def _mu_source_coeffs(dq_eta: list, dyphi: list, deg: int) -> dict:
    """t-coefficients of sum_{a>=1} (d_eta^a q / a!) (d_y phi)^a up to deg."""
    if len(dq_eta) <= 1:
        return {}
    base = {l + 1: dyphi[l] for l in range(len(dyphi)) if l + 1 <= deg}
    out: dict[int, np.ndarray] = {}
    power = {0: 1.0}
    for a in range(1, len(dq_eta)):
        power = _poly_mul(power, base, deg)
        if not power:
            break
        w = dq_eta[a] / math.factorial(a)
        for d, c in power.items():
            out[d] = out.get(d, 0.0) + w * c
    return out


def solve_eikonal(params: SpectralParams, q: GridSymbol) -> PhaseExpansion:
    """Phase coefficients phi_1..phi_{M+1}, degree by degree.

    Degree K of the eikonal expression

        (d_t phi)^2 + d_y phi + t - rho^2 + i mu sum_a (d_eta^a q / a!) (d_y phi)^a

    determines phi_{K+1} through the leading pairing 2 (K+1) phi_1 phi_{K+1};
    phi_1 = rho seeds the ladder, and the ladder runs one step past M so
    every realized coefficient of degree <= M vanishes.  For frequency-
    independent q the mu-source is empty and the recursion matches the
    Taylor expansion of the model integral int_0^t sqrt(rho^2 - s) ds
    whenever q is also y-independent.
    """
    qv = np.asarray(q.values)
    if np.max(np.abs(qv.imag)) > 1e-12:
        raise ValueError("q must be real-valued")
    if np.min(qv.real) <= 0.0:
        raise ValueError("q must be bounded below by a positive constant")
    n = q.n
    h, mu, M = params.h, params.mu, params.M
    eta1 = h * mode_numbers(n)[None, :] * np.ones((n, 1))
    rho = branch_rho(eta1, mu, qv.real)
    if float(np.min(np.abs(rho) ** 2)) < 0.25 * h ** (1.0 + params.eps):
        raise ValueError(
            "phase branch too close to the tangential threshold: "
            "min |rho|^2 under 0.25 h^(1+eps)"
        )
    dq_eta = _eta_ladder(q, M)

    # one guard coefficient past M so the residue starts at t^(M+1)
    phi = [rho.astype(complex)]
    dyphi = [_dy(phi[0])]
    for K in range(1, M + 1):
        pairs = np.zeros((n, n), dtype=complex)
        for l in range(2, K + 1):
            pairs = pairs + l * (K + 2 - l) * phi[l - 1] * phi[K + 1 - l]
        src = pairs + dyphi[K - 1]
        if K == 1:
            src = src + 1.0
        mus = _mu_source_coeffs(dq_eta, dyphi, K)
        if K in mus:
            src = src + 1j * mu * mus[K]
        nxt = -src / (2.0 * (K + 1) * phi[0])
        phi.append(nxt)
        dyphi.append(_dy(nxt))

    # realized eikonal coefficients through degree 2M (> M is the residue)
    deg = 2 * M
    mus = _mu_source_coeffs(dq_eta, dyphi, deg)
    eik = []
    nphi = len(phi)
    for K in range(deg + 1):
        acc = np.zeros((n, n), dtype=complex)
        for l in range(1, nphi + 1):
            m = K + 2 - l
            if 1 <= m <= nphi:
                acc = acc + l * m * phi[l - 1] * phi[m - 1]
        if K == 0:
            acc = acc - rho**2
        if K == 1:
            acc = acc + 1.0
        if 1 <= K <= nphi:
            acc = acc + dyphi[K - 1]
        if K in mus:
            acc = acc + 1j * mu * mus[K]
        eik.append(acc)

    out = PhaseExpansion(params, q, rho, phi, dyphi, eik, dq_eta, 0.1)
    for _ in range(40):
        if out.imag_barrier_margin() >= 0.0:
            break
        out.delta1 *= 0.5
    else:
        raise RuntimeError("no working depth: Im phi barrier failed at delta1 ~ 1e-13")
    return out


# ---------------------------------------------------------------------------
# conjugated derivative series


def build_c_series(phase: PhaseExpansion, amax: int | None = None,
                   order: int | None = None) -> list:
    """Series c_alpha with exp(-i phi/h) (-i h d_y)^alpha exp(i phi/h) = sum
    h^k t^nu c_{alpha,k,nu}; c_0 = 1 and

        c_alpha = (d_y phi) * c_{alpha-1} - i h d_y c_{alpha-1}.

    The k = 0 row of c_alpha is exactly the power (d_y phi)^alpha.
    """
    n = phase.n
    M = phase.params.M
    if amax is None:
        amax = M
    if order is None:
        order = M
    dyphi_series = t_series(
        n, order, {l + 1: phase.dyphi[l] for l in range(len(phase.dyphi))}
    )
    ones = THSeries(n, order)
    ones.add(0, 0, np.ones((n, n), dtype=complex))
    cs = [ones]
    for _ in range(amax):
        cs.append(dyphi_series.mul(cs[-1]) + cs[-1].dy().h_shift(1).scaled(-1j))
    return cs


def _a_series(n: int, order: int, a: dict) -> THSeries:
    out = THSeries(n, order)
    for (k, nu), grid in a.items():
        out.add(k, nu, grid)
    return out


def _source_series(phase: PhaseExpansion, cs: list, aser: THSeries,
                   dqt_eta: list | None) -> THSeries | None:
    """Quantization sources feeding the transport right-hand side.

    The frequency tail of q enters through the conjugated derivatives with
    the k = 0 rows removed (those rows are the symbol products already
    absorbed by the eikonal), divided by one power of h; the lower-order
    symbol qtilde enters undivided.  Returns None when both are inactive.
    """
    mu = phase.params.mu
    has_q = len(phase.dq_eta) > 1
    has_qt = dqt_eta is not None
    if not (has_q or has_qt):
        return None
    n, order = aser.n, aser.order
    dys = [aser]
    amax = max(len(phase.dq_eta) - 1 if has_q else 0,
               len(dqt_eta) - 1 if has_qt else 0)
    for _ in range(amax):
        dys.append(dys[-1].dy())
    out = THSeries(n, order)
    if has_q:
        acc = THSeries(n, order + 1)
        for a in range(1, len(phase.dq_eta)):
            w = phase.dq_eta[a] / math.factorial(a)
            term = cs[a].drop_k0().mul(aser)
            for b in range(1, a + 1):
                piece = dys[b].scaled((-1j) ** b).h_shift(b).mul(cs[a - b])
                term = term + piece.scaled(math.comb(a, b))
            acc = acc + term.scaled(w)
        out = out + acc.h_unshift().scaled(1j * mu)
    if has_qt:
        for a in range(len(dqt_eta)):
            w = dqt_eta[a] / math.factorial(a)
            term = THSeries(n, order)
            for b in range(a + 1):
                piece = dys[b].scaled((-1j) ** b).h_shift(b).mul(cs[a - b])
                term = term + piece.scaled(math.comb(a, b))
            out = out + term.scaled(w)
    return out


# ---------------------------------------------------------------------------
# transport hierarchy


@dataclass
class WkbAmplitudes:
    """Solved amplitude table a[(k, nu)] with its audit series.

    residual_series realizes the full conjugated remainder (tracked to
    order 2M + 2): every coefficient with k + nu <= M vanishes to
    round-off, and the survivors plus the tail bucket are the truncation
    remainder handed to the field-level residual.
    """

    params: SpectralParams
    phase: PhaseExpansion
    q: GridSymbol
    qtilde: GridSymbol | None
    a: dict
    phi2: np.ndarray
    src_series: THSeries | None
    residual_series: THSeries = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.phase.n

    def a_series(self, order: int | None = None) -> THSeries:
        if order is None:
            order = self.params.M
        return _a_series(self.n, order, self.a)

    def amplitude_at(self, t) -> np.ndarray:
        """sum h^k t^nu a_{k,nu} with the working h."""
        h = self.params.h
        total = np.zeros((self.n, self.n), dtype=complex)
        for (k, nu), grid in self.a.items():
            total = total + (h**k * np.asarray(t) ** nu) * grid
        return total

    def recursion_check(self) -> float:
        """Largest realized residual coefficient at orders <= M (round-off)."""
        scale = max(self.residual_series.max_abs(), 1e-300)
        worst = 0.0
        for (k, nu), grid in self.residual_series.terms.items():
            if k + nu <= self.params.M:
                worst = max(worst, float(np.max(np.abs(grid))) / scale)
        return worst

    def report(self) -> dict:
        """Decay-weight table |a_{k,nu}| |rho|^(3k+2nu) and tail audit."""
        absrho = np.abs(self.phase.rho)
        weights = {}
        for (k, nu), grid in sorted(self.a.items()):
            weights[f"a[{k},{nu}]"] = float(np.max(np.abs(grid) * absrho ** (3 * k + 2 * nu)))
        return {
            "weights": weights,
            "recursion_check": self.recursion_check(),
            "tail": dict(sorted(self.residual_series.tail.items())),
        }

    def tail_report(self) -> dict:
        """Remainder size at the working depth against the h^(eps M) scale.

        Also separates the phase-curvature term - i h (d_t^2 phi) a, which
        the transport hierarchy leaves to the assembled field; it dominates
        the discrete residual at O(h / |rho|) and is reported so downstream
        slope measurements can be read against it.
        """
        p = self.params
        rho2 = np.abs(self.phase.rho) ** 2
        tmax = float(self.phase.delta1 * np.max(rho2))
        live = 0.0
        for (k, nu), grid in self.residual_series.terms.items():
            if k + nu > p.M:
                live = max(live, p.h**k * tmax**nu * float(np.max(np.abs(grid))))
        bucket = self.residual_series.tail_at(tmax, p.h)
        curv = 0.0
        for j in range(1, len(self.phase.phi)):
            mag = float(np.max(np.abs(self.phase.phi[j])))
            curv = max(curv, p.h * (j + 1) * j * mag * tmax ** (j - 1))
        ref = p.h ** (p.eps * p.M)
        return {
            "tmax": tmax,
            "live_terms": live,
            "tail_bucket": bucket,
            "curvature_term": curv,
            "h_epsM": ref,
            "ratio": (live + bucket) / ref,
        }


def _phi2_grid(phi2cut, params: SpectralParams, n: int) -> np.ndarray:
    if isinstance(phi2cut, CutoffSpec):
        eta_row = params.h * mode_numbers(n)
        row = bump(phi2cut)(eta_row / params.h**params.eps)
        return row[None, :] * np.ones((n, 1))
    arr = np.asarray(phi2cut, dtype=complex)
    if arr.ndim == 1:
        return arr[None, :] * np.ones((arr.shape[0], 1))
    return arr


def solve_transport(
    params: SpectralParams,
    q: GridSymbol,
    qtilde: GridSymbol | None,
    phase: PhaseExpansion,
    phi2cut=INNER_CUT,
) -> WkbAmplitudes:
    """Amplitude table for u2, row by row in (h^k, t^nu).

    The (k, nu) balance

        2i sum_j (j+1)(nu+1-j) phi_{nu+1-j} a_{k,j+1}
          + (nu+1)(nu+2) a_{k-1,nu+2} + i d_y a_{k,nu} = src_{k,nu}

    is solved for a_{k,nu+1} through the leading pairing 2i (nu+1) phi_1;
    sources at (k, nu) only involve table entries that are already known,
    so the sweep k = 0..M, nu = 0..M-k-1 never looks ahead.  a_{0,0} is the
    frequency cutoff phi2 and the h^(>0) rows start from zero at nu = 0.
    """
    n = phase.n
    M = params.M
    phi = phase.phi
    a: dict[tuple[int, int], np.ndarray] = {(0, 0): _phi2_grid(phi2cut, params, n)}

    dqt_eta = _eta_ladder(qtilde, M) if qtilde is not None else None
    active = len(phase.dq_eta) > 1 or dqt_eta is not None
    cs = build_c_series(phase) if active else None

    for k in range(M + 1):
        if k >= 1:
            a[(k, 0)] = np.zeros((n, n), dtype=complex)
        for nu in range(M - k):
            if active:
                src_ser = _source_series(phase, cs, _a_series(n, M, a), dqt_eta)
                src = src_ser.coeff(k, nu)
            else:
                src = 0.0
            rhs = src - 1j * _dy(a[(k, nu)])
            prev = a.get((k - 1, nu + 2))
            if prev is not None:
                rhs = rhs - (nu + 1) * (nu + 2) * prev
            for j in range(nu):
                rhs = rhs - 2j * (j + 1) * (nu + 1 - j) * phi[nu - j] * a[(k, j + 1)]
            a[(k, nu + 1)] = rhs / (2j * (nu + 1) * phi[0])

    # realized remainder, tracked past the solved block
    hi = 2 * M + 2
    aser = _a_series(n, hi, a)
    dtphi = t_series(n, hi, {l: (l + 1) * phi[l] for l in range(len(phi))})
    eik = t_series(n, hi, {K: phase.eik[K] for K in range(len(phase.eik))})
    res = dtphi.mul(aser.dt()).scaled(-2j).h_shift(1)
    res = res + aser.dt().dt().scaled(-1.0).h_shift(2)
    res = res + aser.dy().scaled(-1j).h_shift(1)
    res = res + eik.mul(aser)
    src_hi = None
    if active:
        cs_hi = build_c_series(phase, order=hi)
        src_hi = _source_series(phase, cs_hi, aser, dqt_eta)
        res = res + src_hi.h_shift(1)

    amps = WkbAmplitudes(params, phase, q, qtilde, a, a[(0, 0)], src_hi, res)
    worst = amps.recursion_check()
    if worst > 1e-9:
        raise RuntimeError(f"transport hierarchy left a solved-order residual: {worst:.2e}")
    return amps


# ---------------------------------------------------------------------------
# field assembly, trace operators, combination


_CUT01 = CutoffSpec(plateau=0.5, support=1.0)


def assemble_u2(f: ModeFunction, amps: WkbAmplitudes,
                t_grid: np.ndarray | None = None) -> tuple[Field, dict]:
    """Evaluate u2 = Op_h(cut * a * exp(i phi/h)) f on a t-grid.

    The depth cutoff is phi(t / (delta1 |rho|^2)) pointwise in (y, eta1);
    the grid spacing resolves both the Airy scale h^(2/3) and the shortest
    cutoff collar delta1 |rho|^2 over the active frequencies.
    """
    p = amps.params
    phase = amps.phase
    n = amps.n
    if f.n != n:
        raise ValueError(f"grid mismatch: amplitudes N={n}, data N={f.n}")
    rho2 = np.abs(phase.rho) ** 2
    mask = np.max(np.abs(amps.phi2), axis=0) > 0.0
    if not np.any(mask):
        raise ValueError("frequency cutoff phi2 vanishes on the whole grid")
    rho2_live = rho2[:, mask]
    if t_grid is None:
        # 32 points per shortest cutoff depth: the collar of the depth bump
        # spans half of delta1 |rho|^2, and the discrete second derivative
        # needs ~16 points across it before the commutator residual it
        # generates is measured rather than manufactured.
        spacing = min(p.h23 / 8.0, phase.delta1 * float(np.min(rho2_live)) / 32.0)
        tmax = phase.delta1 * float(np.max(rho2_live))
        npts = int(math.ceil(tmax / spacing)) + 1
        if npts > 200000:
            raise ValueError(f"t-grid would need {npts} points; refuse")
        npts = max(npts, 8)
        t_grid = spacing * np.arange(npts)
    cut = bump(_CUT01)
    basis = _basis(n)
    vals = np.empty((len(t_grid), n), dtype=complex)
    for i, t in enumerate(t_grid):
        sym = cut(t / (phase.delta1 * rho2)) * amps.amplitude_at(t) \
            * np.exp(1j * phase.phase_at(t) / p.h)
        vals[i] = (sym * basis) @ f.coeffs
    field_out = Field(np.asarray(t_grid, dtype=float), vals, p.h)
    diag = {
        "npts": len(t_grid),
        "dt": float(t_grid[1] - t_grid[0]),
        "tmax": float(t_grid[-1]),
        "delta1": phase.delta1,
    }
    return field_out, diag


def dn_symbol(amps: WkbAmplitudes) -> np.ndarray:
    """Symbol of the semiclassical normal derivative at t = 0.

    D_t(cut * a * e^{i phi/h}) at t = 0 collapses to the single row
    rho * phi2 - i h sum_k h^k a_{k,1}: the cutoffs are flat at zero and
    the amplitude rows a_{k,0} vanish for k >= 1.
    """
    p = amps.params
    sym = amps.phase.rho * amps.phi2
    for k in range(p.M + 1):
        grid = amps.a.get((k, 1))
        if grid is not None:
            sym = sym - 1j * p.h ** (k + 1) * grid
    return sym


def dn_g2(f: ModeFunction, amps: WkbAmplitudes) -> ModeFunction:
    """Normal-derivative trace of the oscillatory field."""
    p = amps.params
    mat = quantize_matrix(GridSymbol(dn_symbol(amps), p.h))
    return ModeFunction(mat @ f.coeffs, p.h)


def residual_g2(
    field: Field,
    params: SpectralParams,
    q: GridSymbol,
    qtilde: GridSymbol | None = None,
) -> dict:
    """Discrete P0 residual norms of an assembled oscillatory field."""
    res = apply_p0(field, params.mu, q, qtilde)
    norms = field_norms(res)
    return {
        "h": params.h,
        "mu": params.mu,
        "eps": params.eps,
        "M": params.M,
        "res_l2": norms["l2"],
        "res_h1": norms["h1"],
    }


def frequency_split(params: SpectralParams, n: int):
    """Cutoff rows of the two-layer frequency decomposition.

    Returns (outer_row, phi2_row, inner_row).  In case 2 the Airy-type
    layer takes the inner window |eta1| <= h^(1+eps)/|mu| and the
    oscillatory wave gets phi2 = outer - inner, so the pieces sum exactly
    to the outer window phi(eta1/h^eps); in case 1 inner_row is None and
    the oscillatory wave covers the window alone.
    """
    h, eps = params.h, params.eps
    eta_row = h * mode_numbers(n)
    outer_row = bump(INNER_CUT)(eta_row / h**eps)
    if params.case == 2:
        inner_row = bump(INNER_CUT)(eta_row * abs(params.mu) / h ** (1.0 + eps))
        return outer_row, outer_row - inner_row, inner_row
    return outer_row, outer_row, None


def dn_parametrix(params: SpectralParams, q: GridSymbol,
                  qtilde: GridSymbol | None = None) -> dict:
    """Mode-space matrix of the combined parametrix DN map.

    Builds all f-independent data (layer amplitudes, trace correction,
    phase, transport) once and folds them into a single matrix, so the
    normal-derivative trace for each boundary datum is one matrix-vector
    product; no interior field is assembled.
    """
    n = q.n
    outer_row, phi2_row, inner_row = frequency_split(params, n)
    mat = np.zeros((n, n), dtype=complex)
    diag: dict = {"case": params.case, "phi2_row": phi2_row, "outer_row": outer_row}
    if inner_row is not None:
        amps1 = _layer.build_amplitudes(params, q, qtilde)
        corr = _layer.boundary_correction(amps1)
        mat += _layer.dn_matrix(amps1, corr)
        diag["layer"] = {"z_norm": corr["z_norm"], "z1_norm": corr["z1_norm"]}
    phase = solve_eikonal(params, q)
    amps2 = solve_transport(params, q, qtilde, phase, phi2_row)
    mat += quantize_matrix(GridSymbol(dn_symbol(amps2), params.h))
    diag["mat"] = mat
    return diag


def combine_parametrix(
    f: ModeFunction,
    params: SpectralParams,
    q: GridSymbol,
    qtilde: GridSymbol | None = None,
) -> dict:
    """Full glancing-region parametrix for boundary data f.

    Deep tangency (|mu| <= h^((1+eps)/2), case 2) splits the frequency
    window: the Airy-type layer handles |eta1| <= h^(1+eps)/|mu| and the
    oscillatory wave takes the rest, with the two cutoffs summing exactly
    to phi(eta1 / h^eps).  Away from that regime (case 1) the oscillatory
    wave covers the whole window on its own.  Returns the fields, the
    combined normal-derivative trace, and trace-fidelity diagnostics.
    """
    n = q.n
    h, eps = params.h, params.eps
    eta_row = h * mode_numbers(n)
    outer_row, phi2_row, inner_row = frequency_split(params, n)

    u1 = dn1 = diag1 = None
    if inner_row is not None:
        amps1 = _layer.build_amplitudes(params, q, qtilde)
        corr = _layer.boundary_correction(amps1)
        u1, layer_diag = _layer.assemble_u1(f, amps1, corr=corr)
        dn1 = _layer.dn_g1(f, amps1, corr=corr)
        diag1 = {"z_norm": corr["z_norm"], "z1_norm": corr["z1_norm"], **layer_diag}

    phase = solve_eikonal(params, q)
    amps2 = solve_transport(params, q, qtilde, phase, phi2_row)
    u2, diag2 = assemble_u2(f, amps2)
    dn2 = dn_g2(f, amps2)

    dn = dn2 if dn1 is None else ModeFunction(dn1.coeffs + dn2.coeffs, h)
    trace = u2.trace if u1 is None else u1.trace + u2.trace
    target = ModeFunction(outer_row * f.coeffs, h).grid()
    bnd_err = float(np.linalg.norm(trace - target) / math.sqrt(n))
    fnorm = max(f.l2(), 1e-300)
    leak_row = 1.0 - bump(OUTER_CUT)(eta_row / h**eps)
    micro = float(np.sqrt(np.sum(np.abs(leak_row * dn.coeffs) ** 2)))
    return {
        "case": params.case,
        "u1": u1,
        "u2": u2,
        "dn": dn,
        "phi2_row": phi2_row,
        "boundary_error": bnd_err,
        "dn_norm": dn.l2(),
        "dn_ratio": dn.l2() / (fnorm * h ** (eps / 2.0)),
        "microsupport_leak": micro / fnorm,
        "layer": diag1,
        "oscillatory": diag2,
    }

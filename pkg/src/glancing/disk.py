"""Exact spectral computations on the constant-coefficient unit disk.

Separation of variables reduces the two-media transmission problem on the
disk to one dispersion function per angular mode,

    D_m(lam) = c1 k1 Jm'(k1) Jm(k2) - c2 k2 Jm(k1) Jm'(k2),
    k_j = sqrt(lam n_j / c_j),

whose zeros are the transmission eigenvalues.  Everything here is built on
a factored complex Bessel ladder (mantissa times power of two) so that
dispersion values stay usable far into regimes where J_m itself under- or
overflows; windings, Newton steps, and residuals only ever use exponent
differences.

Root location is argument-principle first: adaptive phase tracking along
rectangle boundaries, recursive quadrisection until each cell holds a
single zero, then Newton polish with the analytic derivative.  Contours
that hit a root are dilated by a small random factor and retried; the
randomness is seeded and recorded so runs are reproducible.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .symbols import CutoffSpec, bump

__all__ = [
    "DiskConfig",
    "Root",
    "RootSet",
    "bessel_ladder",
    "bessel_j",
    "dispersion",
    "find_roots",
    "mode_cap",
    "count_te",
    "region_scan",
    "dn_disk_mode",
    "glancing_norm_scan",
    "t_symbol_report",
    "roots_to_csv",
    "counting_to_csv",
    "dn_scan_to_csv",
]

_M_ENVELOPE = 10_000
_Z_ENVELOPE = 1_050.0  # 5% headroom over the tested |z| <= 1e3 operating range
_RESCALE_BITS = 512
_RESCALE_UP = float(2.0**_RESCALE_BITS)
_RESCALE_DOWN = float(2.0**-_RESCALE_BITS)
_ORIGIN_GUARD = 1e-3
_WINDING_DEV = 0.15


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DiskConfig:
    """Two constant media (c_j, n_j) on the unit disk.

    Exactly one of the admissible contrast conditions must hold: equal
    sound speeds with distinct indices (case C12), or opposite signs of
    (c1 - c2) and (c1 n1 - c2 n2) (case C13).  Either way the effective
    indices m_j = n_j / c_j are distinct, so the two glancing bands are
    disjoint.
    """

    c1: float
    c2: float
    n1: float
    n2: float

    def __post_init__(self):
        for name in ("c1", "c2", "n1", "n2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.c1 == self.c2:
            if self.n1 == self.n2:
                raise ValueError(
                    "identical media: need n1 != n2 when c1 == c2 (degenerate "
                    "dispersion D_m == 0)"
                )
        elif (self.c1 - self.c2) * (self.c1 * self.n1 - self.c2 * self.n2) >= 0.0:
            raise ValueError(
                "contrast condition violated: need c1 == c2 with n1 != n2, or "
                "(c1 - c2)(c1 n1 - c2 n2) < 0"
            )
        if self.m1 == self.m2:
            raise ValueError("glancing bands coincide: n1/c1 == n2/c2")

    @property
    def condition_case(self) -> str:
        return "C12" if self.c1 == self.c2 else "C13"

    @property
    def m1(self) -> float:
        return self.n1 / self.c1

    @property
    def m2(self) -> float:
        return self.n2 / self.c2

    @property
    def weyl_constant(self) -> float:
        """tau1 + tau2 in N(r) ~ (tau1 + tau2) r^2 (unit-disk Weyl count)."""
        return 0.25 * (self.m1 + self.m2)


# ---------------------------------------------------------------------------
# factored Bessel ladder


def _miller_pass(mmax: int, z: np.ndarray):
    """Downward recurrence, normalized against the Jacobi-Anger series.

    Returns (mant, ex2) of shape (mmax + 2, P) with J_m(z) = mant[m] *
    2**ex2[m].  Columns must satisfy Im z >= 0 and z != 0 (callers reflect
    and special-case).  The anchor sum_m w_m J_m = e^{-iz} with w_0 = 1,
    w_m = 2 (-i)^m is the largest scale in the problem for Im z >= 0, so
    the normalization never cancels catastrophically.
    """
    az = np.abs(z)
    start = int(max(mmax, math.ceil(az.max()))) + int(12.0 * az.max() ** (1.0 / 3.0)) + 30
    P = z.size
    mant = np.empty((mmax + 2, P), dtype=complex)
    ex2 = np.zeros((mmax + 2, P), dtype=np.float64)

    a = np.full(P, 1e-280, dtype=complex)  # J~_k at k = start
    b = np.zeros(P, dtype=complex)  # J~_{k+1}
    ecur = np.zeros(P, dtype=np.float64)
    anchor = np.zeros(P, dtype=complex)  # sum w_k J~_k in the current frame
    inv_z = 1.0 / z
    wk = 2.0 * (-1j) ** (start % 4)
    for k in range(start, -1, -1):
        anchor += (wk if k > 0 else 1.0) * a
        wk *= 1j
        if k <= mmax + 1:
            mant[k] = a
            ex2[k] = ecur
        a, b = (2.0 * k) * inv_z * a - b, a
        big = np.abs(a.real) + np.abs(a.imag) > _RESCALE_UP
        if big.any():
            a[big] *= _RESCALE_DOWN
            b[big] *= _RESCALE_DOWN
            anchor[big] *= _RESCALE_DOWN
            ecur[big] += _RESCALE_BITS
    # fold each raw magnitude into its exponent before dividing by the
    # anchor: within one rescale epoch the raw values span ~1e-280..2^512,
    # and dividing a seed-scale value by a large anchor mantissa would
    # underflow the mantissa to denormal
    araw = np.abs(mant)
    nz = araw > 0.0
    eshift = np.zeros_like(ex2)
    eshift[nz] = np.floor(np.log2(araw[nz]))
    mant[nz] *= np.exp2(-eshift[nz])
    ex2 += eshift
    eanc = np.floor(np.log2(np.abs(anchor)))
    anchor *= np.exp2(-eanc)
    # true anchor value e^{-iz} = e^{Im z} * e^{-i Re z}; fold its modulus
    # into the exponent so nothing overflows
    mant /= anchor[None, :]
    mant *= np.exp(-1j * z.real)[None, :]
    ex2 -= (ecur + eanc)[None, :]
    ex2 += (z.imag / math.log(2.0))[None, :]
    return mant, ex2


def bessel_ladder(mmax: int, z):
    """J_m(z) and J_m'(z) for m = 0..mmax, in factored form.

    Returns (jm, jpm, ex2): J_m(z[p]) = jm[m, p] * 2**ex2[m, p] and the
    same exponent for the derivative row.  Vectorized over z; reflection
    J_m(conj z) = conj J_m(z) routes everything through Im z >= 0.
    """
    if mmax < 0:
        raise ValueError("mode order must be >= 0")
    if mmax > _M_ENVELOPE:
        raise ValueError(f"order {mmax} outside the tested envelope {_M_ENVELOPE}")
    zarr = np.asarray(z, dtype=complex)
    flat = zarr.ravel()
    if np.any(np.abs(flat) > _Z_ENVELOPE):
        raise ValueError(f"|z| outside the tested envelope {_Z_ENVELOPE}")

    out_m = np.zeros((mmax + 2, flat.size), dtype=complex)
    out_e = np.zeros((mmax + 2, flat.size), dtype=np.float64)
    zero = flat == 0.0
    if (~zero).any():
        zz = flat[~zero]
        flip = zz.imag < 0.0
        zz = np.where(flip, np.conj(zz), zz)
        mant, ex2 = _miller_pass(mmax, zz)
        mant = np.where(flip[None, :], np.conj(mant), mant)
        out_m[:, ~zero] = mant
        out_e[:, ~zero] = ex2
    if zero.any():
        out_m[0, zero] = 1.0  # J_m(0) = delta_{m0}

    # derivative via J_m' = (J_{m-1} - J_{m+1})/2, rebased to row m's exponent
    rows = mmax + 1
    jm = out_m[:rows]
    ex = out_e[:rows]
    jpm = np.empty_like(jm)
    jpm[0] = -out_m[1] * np.exp2(out_e[1] - out_e[0])
    for m in range(1, rows):
        lo = out_m[m - 1] * np.exp2(out_e[m - 1] - out_e[m])
        hi = out_m[m + 1] * np.exp2(out_e[m + 1] - out_e[m])
        jpm[m] = 0.5 * (lo - hi)
    if zero.any():
        jpm[:, zero] = 0.0
        if rows > 1:
            jpm[1, zero] = 0.5
    shape = (rows,) + zarr.shape
    return jm.reshape(shape), jpm.reshape(shape), ex.reshape(shape)


def bessel_j(m: int, z, derivative: bool = False):
    """J_m(z), or J_m'(z) with derivative=True (unfactored values).

    Raises on the envelope and overflows to inf outside double range; use
    bessel_ladder for the factored form.
    """
    jm, jpm, ex = bessel_ladder(m, z)
    mant = jpm[m] if derivative else jm[m]
    with np.errstate(over="ignore"):
        out = mant * np.exp2(ex[m])
    return out if np.asarray(z).shape else complex(out)


# ---------------------------------------------------------------------------
# dispersion function


def _disp_rows(m: int, lam: np.ndarray, cfg: DiskConfig):
    """Factored J, J' rows at both media arguments for one mode."""
    if np.any(np.abs(lam) < _ORIGIN_GUARD):
        raise ValueError(f"contour point within {_ORIGIN_GUARD} of the origin")
    near_cut = (lam.real < 0) & (np.abs(lam.imag) < 1e-9 * np.abs(lam.real))
    if near_cut.any():
        warnings.warn(
            "dispersion evaluated within 1e-9 of the negative real axis; "
            "the principal square roots of lam are about to jump branches",
            RuntimeWarning,
            stacklevel=3,
        )
    k1 = np.sqrt(lam * (cfg.n1 / cfg.c1))
    k2 = np.sqrt(lam * (cfg.n2 / cfg.c2))
    both = np.concatenate([k1, k2])
    jm, jpm, ex = bessel_ladder(m, both)
    P = lam.size
    return k1, k2, (jm[m, :P], jpm[m, :P], ex[m, :P]), (jm[m, P:], jpm[m, P:], ex[m, P:])


def _trivial_order(m: int, cfg: DiskConfig) -> int:
    """Order of the trivial zero of D_m at lam = 0.

    From the ascending series: D_0 ~ -(n1 - n2) lam / 2, and for m >= 1
    the leading lam^m coefficient is proportional to m (c1 - c2), which
    cancels exactly when c1 == c2; the next coefficient carries (m1 - m2)
    and survives.
    """
    if m == 0:
        return 1
    return m if cfg.c1 != cfg.c2 else m + 1


def _disp_factored(m: int, lam: np.ndarray, cfg: DiskConfig,
                   derivative: bool = False, reduced: bool = False):
    """(bracket, ex2, termscale [, dbracket]) with D_m = bracket * 2**ex2.

    termscale is the sum of the two term moduli at the same exponent; a
    bracket far below it means the evaluation point sits (numerically) on
    a zero.  The derivative shares the exponent, so Newton steps are plain
    bracket ratios.

    reduced=True divides out the trivial zero, returning the same data for
    D_m(lam) / lam^q with q the order of lam = 0.  The reduced function
    has no root near the origin, which keeps phase tracking tame on
    contours that pass close to it; on origin-avoiding contours the
    winding is identical.
    """
    k1, k2, (j1, jp1, e1), (j2, jp2, e2) = _disp_rows(m, lam, cfg)
    ea = e1 + e2
    t1 = cfg.c1 * k1 * jp1 * j2
    t2 = cfg.c2 * k2 * j1 * jp2
    bracket = t1 - t2
    termscale = np.abs(t1) + np.abs(t2)
    dbracket = None
    if derivative:
        # dD/dlam via dk_j/dlam = k_j/(2 lam), k J'' = -J' - k(1-m^2/k^2) J
        w1 = k1 * k1 - m * m
        w2 = k2 * k2 - m * m
        dk1 = -cfg.c1 * (w1 / k1) * j1 * j2 - cfg.c2 * k2 * jp1 * jp2
        dk2 = cfg.c1 * k1 * jp1 * jp2 + cfg.c2 * (w2 / k2) * j1 * j2
        dbracket = (dk1 * k1 + dk2 * k2) / (2.0 * lam)
    if reduced:
        q = _trivial_order(m, cfg)
        if dbracket is not None:
            dbracket = (dbracket - q * bracket / lam) * np.exp(-1j * q * np.angle(lam))
        phase = np.exp(-1j * q * np.angle(lam))
        bracket = bracket * phase
        ea = ea - q * np.log2(np.abs(lam))
    if dbracket is None:
        return bracket, ea, termscale
    return bracket, ea, termscale, dbracket


def dispersion(m: int, lam, cfg: DiskConfig, factored: bool = False):
    """D_m(lam); zero exactly at the mode-m transmission eigenvalues."""
    arr = np.asarray(lam, dtype=complex).ravel()
    bracket, ex2, _ = _disp_factored(m, arr, cfg)
    if factored:
        shape = np.asarray(lam).shape
        return bracket.reshape(shape or (1,)), ex2.reshape(shape or (1,))
    with np.errstate(over="ignore"):
        out = bracket * np.exp2(ex2)
    return out.reshape(np.asarray(lam).shape) if np.asarray(lam).shape else complex(out[0])


# ---------------------------------------------------------------------------
# argument-principle root location


@dataclass(frozen=True)
class Root:
    lam: complex
    mode: int
    multiplicity: int
    residual: float


@dataclass
class RootSet:
    mode: int
    roots: list = field(default_factory=list)
    ledger: list = field(default_factory=list)

    @property
    def total_multiplicity(self) -> int:
        return sum(r.multiplicity for r in self.roots)


class _ContourHitsRoot(Exception):
    pass


def _rect_path(rect):
    re0, re1, im0, im1 = rect
    return np.array(
        [re0 + 1j * im0, re1 + 1j * im0, re1 + 1j * im1, re0 + 1j * im1, re0 + 1j * im0]
    )


def _param_to_lambda(t: np.ndarray, corners: np.ndarray) -> np.ndarray:
    seg = np.minimum(t.astype(int), 3)
    frac = t - seg
    return corners[seg] * (1.0 - frac) + corners[seg + 1] * frac


def _winding_once(m: int, rect, cfg: DiskConfig, max_pts: int = 16384):
    """Adaptive argument tracking around the rectangle boundary.

    A segment is resolved when its phase step is below pi/2 AND its
    modulus ratio is below 4: phase alone can alias near a zero passing
    close to the contour (the modulus dip always gives it away).  Once
    every segment is resolved and the turning sum is within 0.15 of an
    integer, one verification bisection of all segments must reproduce
    the same integer.  A (numerically) vanishing sample or a refinement
    stall raises _ContourHitsRoot, which callers handle by dilation.
    """
    corners = _rect_path(rect)
    t = np.linspace(0.0, 4.0, 65)
    vals, exs, scl = _disp_factored(m, _param_to_lambda(t, corners), cfg,
                                    reduced=True)
    candidate = None
    for _ in range(60):
        if np.any(np.abs(vals) <= 1e-13 * scl):
            raise _ContourHitsRoot
        dth = np.angle(vals[1:] * np.conj(vals[:-1]))
        logm = np.log2(np.abs(vals)) + exs
        bad = (np.abs(dth) >= 0.5 * math.pi) | (np.abs(np.diff(logm)) > 2.0)
        if not bad.any():
            w = float(np.sum(dth)) / (2.0 * math.pi)
            if abs(w - round(w)) <= _WINDING_DEV:
                if candidate == round(w):
                    return int(round(w)), t.size
                candidate = round(w)
                bad[:] = True  # verification pass: bisect everything once
            else:
                candidate = None
                bad = np.abs(dth) >= 0.5 * np.max(np.abs(dth))
        else:
            candidate = None
        if t.size > max_pts:
            raise _ContourHitsRoot
        mid = 0.5 * (t[:-1][bad] + t[1:][bad])
        nv, ne, ns = _disp_factored(m, _param_to_lambda(mid, corners), cfg,
                                    reduced=True)
        t = np.concatenate([t, mid])
        order = np.argsort(t)
        t = t[order]
        vals = np.concatenate([vals, nv])[order]
        exs = np.concatenate([exs, ne])[order]
        scl = np.concatenate([scl, ns])[order]
    raise _ContourHitsRoot


def _rect_origin_gap(rect) -> float:
    re0, re1, im0, im1 = rect
    nx = re0 if re0 > 0.0 else (re1 if re1 < 0.0 else 0.0)
    ny = im0 if im0 > 0.0 else (im1 if im1 < 0.0 else 0.0)
    return math.hypot(nx, ny)


def _dilate(rect, rng) -> tuple:
    """Grow the rectangle by a random factor in [1.01, 1.05] per axis.

    The grown rectangle is clamped so it never encroaches on the origin
    exclusion: its distance to lam = 0 stays at or above 80% of the
    original distance (and above the hard guard).
    """
    re0, re1, im0, im1 = rect
    cx, cy = 0.5 * (re0 + re1), 0.5 * (im0 + im1)
    fx, fy = rng.uniform(1.01, 1.05, size=2)
    hx, hy = 0.5 * (re1 - re0) * fx, 0.5 * (im1 - im0) * fy
    out = [cx - hx, cx + hx, cy - hy, cy + hy]
    floor = max(_ORIGIN_GUARD, 0.8 * _rect_origin_gap(rect))
    if _rect_origin_gap(out) < floor:
        # pull back only the edges that moved toward the origin
        if rect[0] > 0.0 and out[0] < rect[0]:
            out[0] = max(out[0], min(rect[0], floor))
        if rect[1] < 0.0 and out[1] > rect[1]:
            out[1] = min(out[1], max(rect[1], -floor))
        if rect[2] > 0.0 and out[2] < rect[2]:
            out[2] = max(out[2], min(rect[2], floor))
        if rect[3] < 0.0 and out[3] > rect[3]:
            out[3] = min(out[3], max(rect[3], -floor))
    return tuple(out)


def _winding_guarded(m: int, rect, cfg: DiskConfig, rng, ledger: list):
    r = rect
    for attempt in range(6):
        try:
            w, npts = _winding_once(m, r, cfg)
        except _ContourHitsRoot:
            r = _dilate(rect, rng)
            continue
        ledger.append(
            {"rect": tuple(float(v) for v in r), "winding": w, "points": npts,
             "dilations": attempt}
        )
        return w, r
    raise RuntimeError(
        f"mode {m}: a root stayed on the contour through 5 dilations of {rect}"
    )


def _newton_polish(m: int, lam0: complex, cfg: DiskConfig):
    lam = complex(lam0)
    for _ in range(60):
        if abs(lam) < 5e-3:
            # drifting into the excluded origin (lam = 0 is a trivial zero
            # of every D_m): report as an escape
            return lam, math.inf
        b, _, _, db = _disp_factored(m, np.array([lam]), cfg, derivative=True,
                                     reduced=True)
        if db[0] == 0.0:
            break
        step = b[0] / db[0]
        lam -= step
        if abs(step) < 1e-13 * (1.0 + abs(lam)):
            break
    if abs(lam) < 5e-3:
        return lam, math.inf
    # residual relative to the local dispersion scale (median on a ring of
    # radius ~ 1e-3 the size of lam)
    ring = lam + 1e-3 * (1.0 + abs(lam)) * np.exp(2j * math.pi * np.arange(8) / 8)
    bc, ec = _disp_factored(m, np.array([lam]), cfg, reduced=True)[:2]
    br, er = _disp_factored(m, ring, cfg, reduced=True)[:2]
    emax = float(np.max(er))
    ring_scale = float(np.median(np.abs(br) * np.exp2(er - emax)))
    res = float(np.abs(bc[0]) * np.exp2(ec[0] - emax)) / max(ring_scale, 1e-300)
    return lam, res


def _find_roots_impl(m, rect, cfg, rng, ledger, depth):
    w, r = _winding_guarded(m, rect, cfg, rng, ledger)
    if w == 0:
        return []
    if w < 0:
        raise RuntimeError(f"negative winding {w} on {r}: not a zero count")
    re0, re1, im0, im1 = r
    diag = math.hypot(re1 - re0, im1 - im0)
    center = complex(0.5 * (re0 + re1), 0.5 * (im0 + im1))
    tiny = diag < 1e-8 * (1.0 + abs(center))
    if w == 1 or tiny:
        lam, res = _newton_polish(m, center, cfg)
        inside = (re0 <= lam.real <= re1) and (im0 <= lam.imag <= im1)
        if inside:
            return [Root(lam, m, w, res)]
        if tiny:
            # winding pins the zero to this cell even though Newton left it;
            # report the center with its honest (large) residual
            if abs(center) < 5e-3:
                return [Root(center, m, w, math.inf)]
            bc, ec = _disp_factored(m, np.array([center]), cfg, reduced=True)[:2]
            ring = center + 1e-3 * (1.0 + abs(center)) * np.exp(
                2j * math.pi * np.arange(8) / 8
            )
            br, er = _disp_factored(m, ring, cfg, reduced=True)[:2]
            emax = float(np.max(er))
            rs = float(np.median(np.abs(br) * np.exp2(er - emax)))
            res0 = float(np.abs(bc[0]) * np.exp2(ec[0] - emax)) / max(rs, 1e-300)
            return [Root(center, m, w, res0)]
        # Newton escaped a single-root cell: go deeper
    if depth > 48:
        raise RuntimeError(f"quadrisection depth exhausted at {r}")
    for attempt in range(3):
        jx = 1.0 + 0.2 * (rng.uniform() - 0.5)
        jy = 1.0 + 0.2 * (rng.uniform() - 0.5)
        xs = re0 + 0.5 * (re1 - re0) * jx
        ys = im0 + 0.5 * (im1 - im0) * jy
        cells = [
            (re0, xs, im0, ys),
            (xs, re1, im0, ys),
            (re0, xs, ys, im1),
            (xs, re1, ys, im1),
        ]
        try:
            kids = []
            for cell in cells:
                kids.extend(_find_roots_impl(m, cell, cfg, rng, ledger, depth + 1))
        except RuntimeError:
            if attempt == 2:
                raise
            continue
        kids = _dedup_roots(kids)
        if sum(k.multiplicity for k in kids) == w:
            return kids
        # conservation failed (a dilated child straddled the split); re-split
    raise RuntimeError(
        f"mode {m}: subdivision of {r} does not conserve the winding count {w}"
    )


def _dedup_roots(roots: list) -> list:
    out: list = []
    for root in roots:
        for i, other in enumerate(out):
            if abs(root.lam - other.lam) < 1e-7 * (1.0 + abs(root.lam)):
                if root.residual < other.residual:
                    out[i] = root
                break
        else:
            out.append(root)
    return out


def find_roots(m: int, rect, cfg: DiskConfig, rng=None) -> RootSet:
    """All zeros of D_m inside the rectangle (re0, re1, im0, im1).

    Winding by adaptive argument tracking, quadrisection until single-root
    cells, Newton polish; contours that hit a root are dilated by a seeded
    random factor in [1.01, 1.05] (the ledger records every contour).
    """
    re0, re1, im0, im1 = rect
    if not (re0 < re1 and im0 < im1):
        raise ValueError("rectangle must satisfy re0 < re1 and im0 < im1")
    if _rect_origin_gap(rect) < _ORIGIN_GUARD:
        raise ValueError(
            "rectangle must keep distance >= 1e-3 from lam = 0 (a trivial "
            "zero of every D_m)"
        )
    rng = np.random.default_rng(0xD15C) if rng is None else rng
    out = RootSet(mode=m)
    out.roots = _dedup_roots(_find_roots_impl(m, tuple(rect), cfg, rng, out.ledger, 0))
    return out


# ---------------------------------------------------------------------------
# counting and scans


def mode_cap(rmax: float, cfg: DiskConfig) -> int:
    """Angular modes above this cannot contribute roots with |lam| <= rmax^2.

    Heuristic with a 20% margin plus slack: the m-th dispersion has no
    zeros below the first Bessel turning point, which scales like
    m / max(sqrt(n_j / c_j)).  count_te spot-checks the cap.
    """
    return int(math.ceil(1.2 * rmax * math.sqrt(max(cfg.m1, cfg.m2)))) + 10


_ORIGIN_BOX = 0.02  # half-width of the square carved out around lam = 0


def _origin_box_check(m: int, cfg: DiskConfig) -> None:
    """Verify the carved-out origin box holds only the trivial zero.

    The winding of the reduced dispersion (trivial zero divided out) must
    vanish on the box boundary; the box contour crosses the negative real
    axis by design, so the branch-proximity warning is muted here.
    """
    b = _ORIGIN_BOX
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        w, _ = _winding_once(m, (-b, b, -b, b), cfg)
    if w != 0:
        raise RuntimeError(
            f"mode {m}: {w} non-trivial roots inside the origin box "
            f"|lam| < {b}; these are out of the scanned scope"
        )


def _upper_tiles(R2: float, y_bottom: float, col_width: float, y_edges) -> list:
    """Tiles covering the upper half-disk |lam| <= R2, Im lam >= y_bottom.

    The column straddling the origin is split at the exclusion box; the
    box itself (which holds the trivial zero of D_m) is checked
    separately by _origin_box_check.
    """
    xs: list = list(np.arange(-R2, R2 - 0.25 * col_width, col_width)) + [R2]
    cols = []
    for a, b in zip(xs[:-1], xs[1:]):
        if a < _ORIGIN_BOX and b > -_ORIGIN_BOX:
            if a < -_ORIGIN_BOX:
                cols.append((a, -_ORIGIN_BOX))
            cols.append((-_ORIGIN_BOX, _ORIGIN_BOX))
            if b > _ORIGIN_BOX:
                cols.append((_ORIGIN_BOX, b))
        else:
            cols.append((a, b))
    ys = [y_bottom] + [y for y in y_edges if y_bottom < y < R2] + [R2]
    tiles = []
    for a, b in cols:
        over_origin = -_ORIGIN_BOX >= a and b <= _ORIGIN_BOX
        for y0, y1 in zip(ys[:-1], ys[1:]):
            if over_origin and y0 < _ORIGIN_BOX:
                y0 = _ORIGIN_BOX  # the box column starts above the exclusion
                if y1 <= y0:
                    continue
            dx = min(abs(a), abs(b)) if a * b > 0 else 0.0
            dy = min(abs(y0), abs(y1)) if y0 * y1 > 0 else 0.0
            if dx * dx + dy * dy <= R2 * R2:
                tiles.append((a, b, y0, y1))
    return tiles


def _scan_mode(m: int, tiles, cfg: DiskConfig, rng) -> tuple:
    roots: list = []
    ledger: list = []
    for tile in tiles:
        rs = find_roots(m, tile, cfg, rng=rng)
        ledger.extend(rs.ledger)
        roots.extend(rs.roots)
    return _dedup_roots(roots), ledger


def _over_modes(work, modes, jobs: int) -> dict:
    """Run work(m) for every mode, optionally on a thread pool.

    Results are keyed by mode so callers can assemble ledgers in mode
    order; with per-mode seeding the output is independent of jobs.
    """
    modes = list(modes)
    if jobs <= 1:
        return {m: work(m) for m in modes}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {m: pool.submit(work, m) for m in modes}
        return {m: futures[m].result() for m in modes}


def count_te(rmax: float, cfg: DiskConfig, r_grid=None, seed: int = 0xC0DE,
             jobs: int = 1) -> dict:
    """Counting table N(r) = #{TE : |lam| <= r^2} for r <= rmax.

    Scans the upper half-disk only: a conjugate pair is found once and
    counted twice, a real eigenvalue once; modes m != 0 are doubled for
    the angular degeneracy.  Includes a spot check that the mode cap Mmax
    really is past the last contributing mode.  Contour dilations draw
    from a per-mode stream seeded by (seed, m), so the result does not
    depend on jobs.
    """
    if rmax > 60.0:
        raise ValueError("rmax > 60 exceeds the desk-scale envelope")
    R2 = rmax * rmax
    mcap = mode_cap(rmax, cfg)
    y_bot = -2e-3
    tiles = _upper_tiles(R2, y_bot, col_width=max(8.0, R2 / 24.0),
                         y_edges=(2.0, 8.0, 32.0, 128.0, 512.0))
    for m in range(mcap + 1):
        # cheap, and keeps the warning-filter fiddling out of worker threads
        _origin_box_check(m, cfg)

    def work(m):
        return _scan_mode(m, tiles, cfg, np.random.default_rng([seed, m]))

    scans = _over_modes(work, range(mcap + 1), jobs)
    per_mode = {m: scans[m][0] for m in sorted(scans)}
    ledger = [entry for m in sorted(scans) for entry in scans[m][1]]

    if r_grid is None:
        r_grid = [0.25 * rmax, 0.5 * rmax, 0.75 * rmax, rmax]
    table = []
    for r in r_grid:
        n = 0
        for m, roots in per_mode.items():
            ang = 1 if m == 0 else 2
            for root in roots:
                if abs(root.lam) <= r * r:
                    tol_real = 1e-7 * (1 + abs(root.lam))
                    if root.lam.imag < -tol_real:
                        continue  # mirror of a pair already counted above
                    conj_pair = 2 if root.lam.imag > tol_real else 1
                    n += ang * conj_pair * root.multiplicity
        table.append(
            {"r": float(r), "N": n, "weyl_pred": cfg.weyl_constant * r * r}
        )

    spot_tiles = _upper_tiles(R2, y_bot, col_width=R2 / 2.0, y_edges=(32.0,))
    spot, spot_ledger = _scan_mode(
        mcap + 5, spot_tiles, cfg, np.random.default_rng([seed, mcap + 5])
    )
    ledger.extend(spot_ledger)
    spot_ok = len(spot) == 0
    return {
        "rmax": float(rmax),
        "mode_cap": mcap,
        "table": table,
        "per_mode": per_mode,
        "ledger": ledger,
        "cap_spot_check": spot_ok,
    }


def region_boundary(re: float, c_eps: float, eps: float) -> float:
    return c_eps * (re + 1.0) ** (0.5 + eps)


def region_scan(cfg: DiskConfig, eps: float, c_eps: float, rmax: float,
                seed: int = 0x5CA1, jobs: int = 1,
                control_height: float = 2.0,
                negative_depth: float | None = None) -> dict:
    """Empirical check of the eigenvalue-free region.

    Tiles {Re lam >= 0, Im lam >= c_eps (Re lam + 1)^(1/2+eps)} inside the
    disk |lam| <= rmax^2 (by symmetry of the root set only the upper half
    is scanned), runs find_roots over all contributing modes, and reports
    the total winding inside the region (expected 0) plus the smallest
    |Im lam| of any root caught in the sliver below the region boundary.
    The control strip along the real axis demonstrates the scan has power;
    negative_depth != None also scans Re lam <= -negative_depth.  Each
    (phase, mode) pair draws dilations from its own seeded stream, so the
    result does not depend on jobs.
    """
    R2 = rmax * rmax
    mcap = mode_cap(rmax, cfg)
    modes = range(mcap + 1)

    cols = np.linspace(0.0, R2, 9)
    region_tiles = []
    for a, b in zip(cols[:-1], cols[1:]):
        y0 = region_boundary(a, c_eps, eps)
        if y0 >= R2:
            continue
        region_tiles.append((max(a, _ORIGIN_GUARD), b, y0, R2))

    def region_work(m):
        return _scan_mode(m, region_tiles, cfg, np.random.default_rng([seed, 0, m]))

    scans = _over_modes(region_work, modes, jobs)
    ledger = [entry for m in sorted(scans) for entry in scans[m][1]]
    region_winding = 0
    frontier = None
    region_roots: list = []
    for m in sorted(scans):
        for root in scans[m][0]:
            if root.lam.imag >= region_boundary(root.lam.real, c_eps, eps):
                region_winding += root.multiplicity
                region_roots.append(root)
            else:
                im = abs(root.lam.imag)
                frontier = im if frontier is None else min(frontier, im)

    control_tiles = _upper_tiles(R2, -2e-3, col_width=max(8.0, R2 / 16.0),
                                 y_edges=())
    control_tiles = [
        (a, b, y0, min(y1, control_height)) for (a, b, y0, y1) in control_tiles
        if a >= 0.0 and y0 < control_height
    ]

    def control_work(m):
        return _scan_mode(m, control_tiles, cfg, np.random.default_rng([seed, 1, m]))

    scans = _over_modes(control_work, modes, jobs)
    control_roots: list = []
    for m in sorted(scans):
        control_roots.extend(scans[m][0])
        ledger.extend(scans[m][1])

    report = {
        "eps": eps,
        "c_eps": c_eps,
        "rmax": rmax,
        "mode_cap": mcap,
        "region_winding": region_winding,
        "region_roots": region_roots,
        "frontier_im": frontier,
        "control_count": sum(r.multiplicity for r in control_roots),
        "control_roots": control_roots,
        "ledger": ledger,
    }
    if negative_depth is not None:
        neg_roots: list = []
        neg_tiles = [(-R2, -float(negative_depth), -2.0, 2.0)]

        def negative_work(m):
            return _scan_mode(m, neg_tiles, cfg, np.random.default_rng([seed, 2, m]))

        # these tiles straddle the negative real axis on purpose; the
        # dispersion value is branch-independent there, so the proximity
        # warning is noise in this context
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message=".*negative real axis.*",
                                    category=RuntimeWarning)
            scans = _over_modes(negative_work, modes, jobs)
        for m in sorted(scans):
            neg_roots.extend(scans[m][0])
            ledger.extend(scans[m][1])
        report["negative_axis_count"] = sum(r.multiplicity for r in neg_roots)
    return report


# ---------------------------------------------------------------------------
# DN multipliers on the disk


def dn_disk_mode(m: int, h: float, mu: float) -> complex:
    """Semiclassical DN multiplier i h k J_m'(k)/J_m(k), k = sqrt(1+i mu)/h.

    The normal derivative is taken along the inward coordinate t = 1 - r,
    so (-ih d/dt) at the boundary is +ih d/dr.  Hyperbolic modes
    (h^2 m^2 < 1) sit near (1 - h^2 m^2 + i mu)^(1/2), elliptic ones near
    i (h^2 m^2 - 1)^(1/2).  Raises when J_m(k) is numerically at a zero
    (pole of the multiplier).
    """
    k = np.sqrt(1.0 + 1j * mu) / h
    jm, jpm, _ = bessel_ladder(m, np.array([k]))
    if abs(jm[m, 0]) < 1e-8 * abs(jpm[m, 0]):
        raise ValueError(f"DN pole: J_{m}(k) vanishes at k = {k:.6g}")
    return complex(1j * h * k * jpm[m, 0] / jm[m, 0])


def _dn_row(mmax: int, h: float, mu: float):
    """DN multipliers for all modes 0..mmax in one ladder pass."""
    k = np.sqrt(1.0 + 1j * mu) / h
    jm, jpm, _ = bessel_ladder(mmax, np.array([k]))
    bad = np.abs(jm[:, 0]) < 1e-8 * np.abs(jpm[:, 0])
    if bad.any():
        raise ValueError(f"DN pole at modes {np.nonzero(bad)[0]}")
    return 1j * h * k * jpm[:, 0] / jm[:, 0]


def glancing_norm_scan(h_list, mu_rule, eps: float, band_scale: float = 1.0) -> dict:
    """Max DN multiplier over the glancing band, per h, with a slope fit.

    The band is |h^2 m^2 - 1| <= 2 band_scale h^(eps/2) and the cutoff
    chi0 is 1 on its inner third; the DN map is mode-diagonal, so the
    operator norm of N Op(chi0) is just the max of |dn * chi0| over the
    band.  band_scale = 0 degenerates to chi0 == 0 (max 0 by convention).
    """
    rows = []
    for h in h_list:
        mu = float(mu_rule(h))
        if not (h ** (1.0 - eps) * (1 - 1e-9) <= abs(mu) <= h**eps * (1 + 1e-9)):
            raise ValueError(f"mu rule leaves the band [h^(1-eps), h^eps] at h={h}")
        if band_scale == 0.0:
            rows.append({"h": h, "mu": mu, "band_max": 0.0, "modes": 0})
            continue
        half = 2.0 * band_scale * h ** (eps / 2.0)
        mmax = int(math.floor(math.sqrt(1.0 + half) / h))
        dn = _dn_row(mmax, h, mu)
        r0 = (h * np.arange(mmax + 1)) ** 2
        # shape keeps max |dn*chi| <= 1 at h = 1e-2, where the band is
        # widest; |dn| ~ sqrt(|r0-1|) outgrows 1 near the band edge
        chi = bump(CutoffSpec(plateau=0.3, support=0.8))((r0 - 1.0) / half)
        sel = chi > 0.0
        if not sel.any():
            raise ValueError(f"empty glancing band at h={h}: no integer mode "
                             f"within |h^2 m^2 - 1| <= {half:.3g}")
        rows.append(
            {
                "h": h,
                "mu": mu,
                "band_max": float(np.max(np.abs(dn * chi))),
                "modes": int(sel.sum()),
            }
        )
    slope = None
    live = [r for r in rows if r["band_max"] > 0.0]
    if len(live) >= 2:
        slope = float(
            np.polyfit(
                np.log([r["h"] for r in live]), np.log([r["band_max"] for r in live]), 1
            )[0]
        )
    return {"rows": rows, "slope": slope}


# ---------------------------------------------------------------------------
# T-symbol ellipticity report

# Floors frozen from the first-release measurements (see the test suite):
# over h in {1e-2, 10^-2.5} at |Im z| = h^0.8, C12 at (1,1,4,1) measured
# min 0.8108, C13 at (2,1,1,4) measured min 0.0857.  The C13 dip (mode 10
# at h = 1e-2) is a genuine near-cancellation of c1 N1 - c2 N2 where the
# medium-1 reflection term still oscillates (Im k1 ~ 1); it recedes as h
# shrinks.  Floors sit ~20% below the measured minima.
T_FLOOR = {"C12": 0.65, "C13": 0.065}


def t_symbol_report(h: float, z: complex, cfg: DiskConfig, eps: float = 0.2,
                    mmax: int | None = None) -> dict:
    """Ellipticity margin of the two-media DN difference c1 N1 - c2 N2.

    Per-mode values at spectral parameter z (Re z = 1, |Im z| >= h^(1-eps)),
    weighted by <r0>^(k/2) with r0 = (h m)^2 and k = -1 for case C12, +1
    for case C13.  Reports the minimum weighted modulus and whether it
    clears the frozen floor.
    """
    z = complex(z)
    if abs(z.real - 1.0) > 1e-12:
        raise ValueError("spectral parameter must have Re z = 1")
    if abs(z.imag) < h ** (1.0 - eps) * (1 - 1e-9):
        raise ValueError("need |Im z| >= h^(1-eps)")
    if mmax is None:
        mmax = int(math.ceil(1.5 * math.sqrt(max(cfg.m1, cfg.m2)) / h)) + 10
    k1 = np.sqrt(z * cfg.m1) / h
    k2 = np.sqrt(z * cfg.m2) / h
    jm, jpm, _ = bessel_ladder(mmax, np.array([k1, k2]))
    bad = np.abs(jm) < 1e-10 * np.abs(jpm)
    if bad.any():
        raise ValueError("DN pole inside the mode range")
    n1 = 1j * h * k1 * jpm[:, 0] / jm[:, 0]
    n2 = 1j * h * k2 * jpm[:, 1] / jm[:, 1]
    values = cfg.c1 * n1 - cfg.c2 * n2
    kexp = -1 if cfg.condition_case == "C12" else 1
    r0 = (h * np.arange(mmax + 1)) ** 2
    # bracket weight <r0> = (1 + r0^2)^(1/2)
    weighted = np.abs(values) / (1.0 + r0**2) ** (kexp / 4.0)
    imin = int(np.argmin(weighted))
    floor = T_FLOOR[cfg.condition_case]
    return {
        "h": h,
        "z": z,
        "case": cfg.condition_case,
        "k": kexp,
        "mmax": mmax,
        "min_ratio": float(weighted[imin]),
        "argmin_mode": imin,
        "floor": floor,
        "invertible": bool(weighted[imin] > floor),
        "values": values,
        "weighted": weighted,
    }


# ---------------------------------------------------------------------------
# flat-file output


def _csv_open(path, digest):
    fh = open(path, "w")
    if digest is not None:
        fh.write(f"# config_digest: {digest}\n")
    return fh


def roots_to_csv(rootsets, path, digest: str | None = None) -> None:
    """Columns m, Re lam, Im lam, multiplicity, residual."""
    with _csv_open(path, digest) as fh:
        fh.write("m,re_lambda,im_lambda,multiplicity,residual\n")
        for rs in rootsets:
            for r in sorted(rs.roots, key=lambda x: (x.lam.real, x.lam.imag)):
                fh.write(
                    f"{rs.mode},{r.lam.real:.17g},{r.lam.imag:.17g},"
                    f"{r.multiplicity},{r.residual:.6g}\n"
                )


def counting_to_csv(table, path, digest: str | None = None) -> None:
    with _csv_open(path, digest) as fh:
        fh.write("r,N,weyl_pred\n")
        for row in table:
            fh.write(f"{row['r']:.17g},{row['N']},{row['weyl_pred']:.17g}\n")


def dn_scan_to_csv(scan: dict, path, digest: str | None = None) -> None:
    with _csv_open(path, digest) as fh:
        fh.write("h,mu,band_max,slope_estimate\n")
        s = scan["slope"]
        for row in scan["rows"]:
            fh.write(
                f"{row['h']:.17g},{row['mu']:.17g},{row['band_max']:.17g},"
                f"{'' if s is None else format(s, '.17g')}\n"
            )

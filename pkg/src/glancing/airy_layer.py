"""Airy boundary layer for the model operator near glancing.

The construction covers the inner frequency region where |mu|(|mu|+|eta1|)
is at most h^(1+eps).  The field ansatz is

    u1 = phi(t/h^eps) Op_h(A(t)) g,     A(t) = sum_k a_k(y,eta) psi_k(t),

with psi_k(t) = h^(k/3) Ai^(k)((t+zeta) h^(-2/3)) / Ai(zeta h^(-2/3)) and
zeta = eta1 + i mu q(y,eta).  Because

    (D_t^2 + t + zeta) psi_k = -h k psi_{k-1},

the operator turns the ansatz into a transport hierarchy for the a_k.  The
tangential derivatives close over the family {F^p psi_k} where F is h^(1/3)
times the logarithmic derivative of Ai at the boundary argument, so the
whole hierarchy is solved exactly in a small formal algebra with grid-valued
coefficients; no hand-tabulated source coefficients are needed.

Derivative closure rules (exact consequences of Ai'' = z Ai):

    d_y psi_k = (i mu d_y q / h) (psi_{k+1} - F psi_k)
    d_y F     = (i mu d_y q / h) (zeta - F^2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import airy
from .fields import Field, apply_p0, field_norms, layer_t_grid
from .params import SpectralParams
from .symbols import (
    CutoffSpec,
    GridSymbol,
    ModeFunction,
    _basis,
    bump,
    eta_derivative,
    mode_numbers,
    op_norm,
    quantize_matrix,
    y_derivative,
)

__all__ = [
    "LayerFrame",
    "FormalSum",
    "AmplitudeSet",
    "build_amplitudes",
    "formal_dy",
    "assemble_u1",
    "boundary_correction",
    "dn_g1",
    "residual_g1",
]

# Inner cutoff phi (right factor of the boundary data) and its envelope
# phi_1 (the symbol factor a_0, identically 1 on supp phi).
INNER_CUT = CutoffSpec(plateau=0.5, support=1.0)
OUTER_CUT = CutoffSpec(plateau=1.0, support=2.0)


class LayerFrame:
    """Shared evaluation data for one (params, q, qtilde) triple."""

    def __init__(self, params: SpectralParams, q: GridSymbol, qtilde: GridSymbol | None = None):
        qv = np.asarray(q.values)
        if np.max(np.abs(qv.imag)) > 1e-12:
            raise ValueError("q must be real-valued")
        if np.min(qv.real) <= 0.0:
            raise ValueError("q must be bounded below by a positive constant")
        self.params = params
        self.q = q
        self.qtilde = qtilde
        self.n = q.n
        h, mu = params.h, params.mu
        self.eta1 = h * mode_numbers(self.n)[None, :] * np.ones((self.n, 1))
        self.zeta = self.eta1 + 1j * mu * qv.real
        self.wtilde = self.zeta / params.h23
        self._ev_den = airy.airy_factored(self.wtilde)
        airy._pole_check(self._ev_den)
        self.fsharp = h ** (1.0 / 3.0) * self._ev_den.log_deriv
        self.dq_fac = 1j * mu * y_derivative(q, 1) / h
        # eta-derivatives of q for the quantization tail; skipped entirely
        # when q has no frequency dependence.
        self.dq_eta = [qv.astype(complex)]
        if params.M >= 1:
            d1 = eta_derivative(q, 1)
            if np.max(np.abs(d1)) > 1e-10 * max(np.max(np.abs(qv)), 1.0):
                self.dq_eta.append(d1)
                for a in range(2, params.M + 1):
                    self.dq_eta.append(eta_derivative(q, a))
        self.dqt_eta = None
        if qtilde is not None:
            self.dqt_eta = [np.asarray(qtilde.values, dtype=complex)]
            for a in range(1, params.M + 1):
                self.dqt_eta.append(eta_derivative(qtilde, a))

    def psi_slice(self, t: float, kmax: int) -> list[np.ndarray]:
        """[psi_k(t) for k = 0..kmax] on the (y, eta) grid."""
        tau = t / self.params.h23
        ratios = airy.psi_ladder(tau, self.wtilde, kmax, ev_z=self._ev_den)
        h3 = self.params.h ** (1.0 / 3.0)
        return [h3**k * r for k, r in enumerate(ratios)]


class FormalSum:
    """Finite sum  sum_{p,k} c_{p,k}(y,eta) F^p psi_k  with grid coefficients."""

    def __init__(self, frame: LayerFrame, terms: dict | None = None):
        self.frame = frame
        self.terms: dict[tuple[int, int], np.ndarray] = {}
        if terms:
            for key, val in terms.items():
                self.add_term(key[0], key[1], val)

    def add_term(self, p: int, k: int, coef: np.ndarray) -> None:
        if p < 0 or k < 0:
            raise ValueError("F-power and psi index must be nonnegative")
        key = (p, k)
        cur = self.terms.get(key)
        self.terms[key] = coef if cur is None else cur + coef

    def copy(self) -> "FormalSum":
        out = FormalSum(self.frame)
        out.terms = {key: val.copy() for key, val in self.terms.items()}
        return out

    def scaled(self, factor) -> "FormalSum":
        out = FormalSum(self.frame)
        out.terms = {key: factor * val for key, val in self.terms.items()}
        return out

    def __add__(self, other: "FormalSum") -> "FormalSum":
        out = self.copy()
        for (p, k), val in other.terms.items():
            out.add_term(p, k, val)
        return out

    def kmax(self) -> int:
        return max((k for (_, k) in self.terms), default=-1)

    def dy(self) -> "FormalSum":
        """Exact formal tangential derivative (product rule + closure rules)."""
        fr = self.frame
        out = FormalSum(fr)
        dq = fr.dq_fac
        for (p, k), c in self.terms.items():
            out.add_term(p, k, _dy_grid(c, fr.n))
            ladder = c * dq
            if p:
                out.add_term(p - 1, k, p * ladder * fr.zeta)
                out.add_term(p + 1, k, -p * ladder)
            out.add_term(p, k + 1, ladder)
            out.add_term(p + 1, k, -ladder)
        return out

    def coeff_of_psi(self, k: int) -> np.ndarray:
        """Collapse the F-powers: the grid coefficient of psi_k."""
        fr = self.frame
        pmax = max((p for (p, kk) in self.terms if kk == k), default=-1)
        if pmax < 0:
            return np.zeros((fr.n, fr.n), dtype=complex)
        acc = np.zeros((fr.n, fr.n), dtype=complex)
        for p in range(pmax, -1, -1):
            acc = acc * fr.fsharp
            c = self.terms.get((p, k))
            if c is not None:
                acc = acc + c
        return acc

    def evaluate(self, t: float) -> np.ndarray:
        """Symbol grid of the sum at layer depth t."""
        km = self.kmax()
        if km < 0:
            return np.zeros((self.frame.n, self.frame.n), dtype=complex)
        psis = self.frame.psi_slice(t, km)
        acc = np.zeros((self.frame.n, self.frame.n), dtype=complex)
        for k in range(km + 1):
            ck = self.coeff_of_psi(k)
            if np.any(ck):
                acc = acc + ck * psis[k]
        return acc


def _dy_grid(values: np.ndarray, n: int) -> np.ndarray:
    m = mode_numbers(n)
    return np.fft.ifft(1j * m[:, None] * np.fft.fft(values, axis=0), axis=0)


def formal_dy(s: FormalSum) -> FormalSum:
    return s.dy()


def _source_sum(frame: LayerFrame, ansatz: FormalSum) -> FormalSum:
    """-ih d_y A + h E1(A) + h E2(A): everything the transport must absorb."""
    h, mu, M = frame.params.h, frame.params.mu, frame.params.M
    dy1 = ansatz.dy()
    total = dy1.scaled(-1j * h)
    needs_e1 = len(frame.dq_eta) > 1
    needs_e2 = frame.dqt_eta is not None
    if needs_e1 or needs_e2:
        if needs_e2:
            total = total + ansatz.scaled(h * frame.dqt_eta[0])
        d = dy1
        for alpha in range(1, M + 1):
            w = (-1j * h) ** alpha / math.factorial(alpha)
            if needs_e1 and alpha < len(frame.dq_eta):
                total = total + d.scaled(h * (1j * mu / h) * w * frame.dq_eta[alpha])
            if needs_e2 and alpha < len(frame.dqt_eta):
                total = total + d.scaled(h * w * frame.dqt_eta[alpha])
            if alpha < M:
                d = d.dy()
    return total


@dataclass
class AmplitudeSet:
    """Transport solution a_0..a_{M+1} plus the uncancelled layer residue."""

    params: SpectralParams
    frame: LayerFrame
    a: list[np.ndarray]
    ansatz: FormalSum
    residual_sum: FormalSum

    @property
    def n(self) -> int:
        return self.frame.n

    def a_symbol(self, k: int) -> GridSymbol:
        return GridSymbol(self.a[k], self.params.h)

    def recursion_check(self) -> float:
        """Max grid magnitude of the psi_k coefficients (k < M) of the residue.

        These vanish identically by construction; the check evaluates the
        collapsed coefficients and returns the worst absolute value, which
        should sit at round-off relative to the a_k scale.
        """
        worst = 0.0
        for k in range(self.params.M):
            worst = max(worst, float(np.max(np.abs(self.residual_sum.coeff_of_psi(k)))))
        return worst

    def weight_report(self) -> dict:
        """Measured growth of the a_k against the expansion weights.

        Records sup |d_y^alpha a_k| / rho2^k for alpha <= 2 and, at t = 0,
        sup |a_k psi_k| / (rho1 rho2)^k, both over the inner region where the
        layer is active.
        """
        p = self.params
        eta_row = p.h * mode_numbers(self.n)
        mask_row = p.layer_split(eta_row)
        if not np.any(mask_row):
            return {"empty": True, "ok": True}
        r1 = p.rho1(eta_row)[None, :]
        r2 = p.rho2(eta_row)[None, :]
        psis0 = self.frame.psi_slice(0.0, p.M + 1)
        amp_ratios = []
        pair_ratios = []
        for k, ak in enumerate(self.a):
            dmax = np.zeros_like(ak, dtype=float)
            d = ak
            for _ in range(3):
                dmax = np.maximum(dmax, np.abs(d))
                d = _dy_grid(d, self.n)
            amp_ratios.append(float((dmax / r2**k)[:, mask_row].max()))
            if k <= p.M:
                pair = np.abs(ak * psis0[k]) / (r1 * r2) ** k
                pair_ratios.append(float(pair[:, mask_row].max()))
        prod = float(((r1 * r2) / p.h ** (p.eps / 2.0))[:, mask_row].max())
        return {
            "empty": False,
            "amp_over_rho2k": amp_ratios,
            "pair_over_rho1rho2k": pair_ratios,
            "product_ratio": prod,
            "ok": bool(np.isfinite(amp_ratios).all() if amp_ratios else True),
        }


def build_amplitudes(
    params: SpectralParams,
    q: GridSymbol,
    qtilde: GridSymbol | None = None,
) -> AmplitudeSet:
    """Solve the layer transport hierarchy.

    a_0 is the enlarged inner cutoff; each a_{k+1} is read off as the psi_k
    coefficient of the full source sum, divided by h (k+1).  The returned
    residual_sum is everything the truncation leaves behind (its psi_k
    coefficients vanish for k < M).
    """
    frame = LayerFrame(params, q, qtilde)
    h, M = params.h, params.M
    if not np.any(params.layer_split(h * mode_numbers(frame.n))):
        raise ValueError(
            "inner layer region |mu|(|mu| + |eta1|) <= h^(1+eps) contains no "
            "grid frequency; the Airy layer does not apply at these parameters"
        )
    scale = abs(params.mu) / h ** (1.0 + params.eps)
    phi1 = bump(OUTER_CUT)
    a0 = (phi1(frame.eta1 * scale) + 0j) * np.ones((frame.n, frame.n))
    a = [a0]
    ansatz = FormalSum(frame, {(0, 0): a0})
    src = _source_sum(frame, ansatz)
    for k in range(M + 1):
        nxt = src.coeff_of_psi(k) / (h * (k + 1))
        a.append(nxt)
        if k + 1 <= M:
            ansatz.add_term(0, k + 1, nxt)
            src = _source_sum(frame, ansatz)
    residue = src
    for k in range(M):
        residue.add_term(0, k, -h * (k + 1) * a[k + 1])
    return AmplitudeSet(params, frame, a, ansatz, residue)


def boundary_correction(amps: AmplitudeSet) -> dict:
    """Boundary operators for matching the trace.

    At t = 0 the ansatz trace is Op(a_0 + Z_sym) with Z_sym collecting the
    k >= 1 contributions; g solves (I + Z) g = Op(phi) f so that the full
    trace is Op(phi) f modulo the cross-cutoff leakage Z1.
    """
    p = amps.params
    n = amps.n
    psis0 = amps.frame.psi_slice(0.0, p.M)
    z_sym = np.zeros((n, n), dtype=complex)
    for k in range(1, p.M + 1):
        z_sym = z_sym + amps.a[k] * psis0[k]
    zmat = quantize_matrix(GridSymbol(z_sym, p.h))
    znorm = op_norm(zmat)
    if znorm >= 0.9:
        raise RuntimeError(
            f"trace correction ||Z|| = {znorm:.3f}; expected O(h^(eps/2)) -- "
            "construction defect or parameters far outside the band"
        )
    eta_row = p.h * mode_numbers(n)
    scale = abs(p.mu) / p.h ** (1.0 + p.eps)
    phi_in = bump(INNER_CUT)(eta_row * scale)
    phi1_out = bump(OUTER_CUT)(eta_row * scale)
    ident = np.eye(n, dtype=complex)
    inv = np.linalg.solve(ident + zmat, ident)
    # cross-cutoff leakage (1 - phi_1) (I+Z)^{-1} phi: vanishing supports
    z1 = (1.0 - phi1_out)[:, None] * inv * phi_in[None, :]
    return {
        "zmat": zmat,
        "inv": inv,
        "phi_in": phi_in,
        "z_norm": znorm,
        "z1_norm": op_norm(z1),
    }


def _g_modes(f: ModeFunction, corr: dict) -> np.ndarray:
    return corr["inv"] @ (corr["phi_in"] * f.coeffs)


def assemble_u1(
    f: ModeFunction,
    amps: AmplitudeSet,
    t_grid: np.ndarray | None = None,
    corr: dict | None = None,
) -> tuple[Field, dict]:
    """Evaluate the layer field on a t-grid.

    The field lives on [0, h^eps]: the depth cutoff phi(t/h^eps) is 1 up to
    h^eps/2 and vanishes at h^eps.  The default grid resolves h^(2/3) with 8
    points; if the Airy factors decay below round-off before the support
    edge, the grid stops early (the tail rows would be exact zeros).
    """
    p = amps.params
    if f.n != amps.n:
        raise ValueError("mode data does not match the symbol grid")
    if corr is None:
        corr = boundary_correction(amps)
    g = _g_modes(f, corr)
    if t_grid is None:
        eta_supp = 2.0 * p.h ** (1.0 + p.eps) / abs(p.mu)
        qmax = float(np.max(amps.frame.q.values.real))
        wmax = (eta_supp + abs(p.mu) * qmax) / p.h23
        tmax = min(p.h**p.eps, p.h23 * (wmax + 14.0))
        t_grid = layer_t_grid(p.h, tmax)
    outer = bump(INNER_CUT)(t_grid / p.h**p.eps)
    n = amps.n
    basis = _basis(n)
    vals = np.empty((t_grid.size, n), dtype=complex)
    for i, t in enumerate(t_grid):
        sym = amps.ansatz.evaluate(float(t))
        vals[i] = outer[i] * ((sym * basis) @ g)
    field = Field(t_grid, vals, p.h)
    diag = {"z_norm": corr["z_norm"], "z1_norm": corr["z1_norm"]}
    return field, diag


def _dn_trace_symbol(amps: AmplitudeSet) -> np.ndarray:
    """Symbol of D_t u1 at t = 0 acting on the corrected data g.

    h d_t psi_k = psi_{k+1}, so the trace of D_t u1 is
    -i Op(sum_k a_k psi_{k+1}(0)) g; the outer t-cutoff is flat at 0.
    """
    p = amps.params
    psis0 = amps.frame.psi_slice(0.0, p.M + 1)
    sym = np.zeros((amps.n, amps.n), dtype=complex)
    for k in range(p.M + 1):
        sym = sym + amps.a[k] * psis0[k + 1]
    return sym


def dn_g1(f: ModeFunction, amps: AmplitudeSet, corr: dict | None = None) -> ModeFunction:
    """Semiclassical normal derivative of the layer field at t = 0."""
    p = amps.params
    if corr is None:
        corr = boundary_correction(amps)
    g = _g_modes(f, corr)
    dn_mat = quantize_matrix(GridSymbol(_dn_trace_symbol(amps), p.h))
    return ModeFunction(-1j * (dn_mat @ g), p.h)


def dn_matrix(amps: AmplitudeSet, corr: dict | None = None) -> np.ndarray:
    """Mode-space matrix of the full layer DN map f -> D_t u1|_0.

    Folds the trace correction into the matrix so repeated boundary data
    cost one matrix-vector product each.
    """
    p = amps.params
    if corr is None:
        corr = boundary_correction(amps)
    dn_mat = quantize_matrix(GridSymbol(_dn_trace_symbol(amps), p.h))
    return -1j * (dn_mat @ corr["inv"]) * corr["phi_in"][None, :]


def residual_g1(
    field: Field,
    params: SpectralParams,
    q: GridSymbol,
    qtilde: GridSymbol | None = None,
) -> dict:
    """Discrete P0 residual norms of an assembled layer field."""
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

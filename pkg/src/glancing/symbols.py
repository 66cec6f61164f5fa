"""Discrete symbol calculus on the circle.

Everything lives on the unit circle with N uniform points y_j = 2 pi j / N and
the fft mode ladder m in {0, 1, ..., N/2 - 1, -N/2, ..., -1}.  A symbol is
sampled at (y_j, eta_m) with eta_m = h * m, and quantization pairs the sample
at eta = h m with the oscillation e^{i m y}:

    (Op_h(a) f)(y_j) = sum_m a(y_j, h m) fhat_m e^{i m y_j}.

Convention pin: with a(y, eta) = eta this gives Op_h(eta) e^{imy} = h m e^{imy},
i.e. Op_h(eta) = -i h d/dy.  All downstream sign choices trace back to this
single identity, so it is asserted in the test suite rather than documented
only.

Fourier coefficients follow fhat = fft(f)/N, so f(y_j) = sum fhat_m e^{im y_j}
exactly on the grid.  The ladder contains m = -N/2 but not +N/2; band-limited
data should stay well inside +-N/4 anyway.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


def mode_numbers(n: int) -> np.ndarray:
    """fft-order integer modes {0, ..., n/2 - 1, -n/2, ..., -1}."""
    return np.fft.fftfreq(n, 1.0 / n).astype(int)


def grid_y(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


@lru_cache(maxsize=8)
def _basis(n: int) -> np.ndarray:
    """B[j, i] = e^{i m_i y_j}; a few MB at n = 512, so cache it."""
    return np.exp(1j * grid_y(n)[:, None] * mode_numbers(n)[None, :])


@dataclass(frozen=True)
class ModeFunction:
    """Boundary data as Fourier coefficients on the fft ladder."""

    coeffs: np.ndarray
    h: float

    @classmethod
    def from_grid(cls, values, h: float) -> "ModeFunction":
        values = np.asarray(values, dtype=complex)
        return cls(np.fft.fft(values) / values.size, h)

    @property
    def n(self) -> int:
        return self.coeffs.size

    def grid(self) -> np.ndarray:
        return np.fft.ifft(self.coeffs * self.n)

    def l2(self) -> float:
        """Norm in (2 pi)^{-1} integral normalization; equals the mode norm."""
        return float(np.linalg.norm(self.coeffs))

    def l2_grid(self) -> float:
        g = self.grid()
        return float(np.sqrt(np.mean(np.abs(g) ** 2)))


@dataclass(frozen=True)
class GridSymbol:
    """Samples a(y_j, h m_i), plus the claimed symbol-class exponents.

    values[j, i] pairs the j-th grid point with the i-th fft mode.  class_k
    and class_delta are metadata: growth order in <eta> and the h^{-delta}
    loss per derivative.  They are recorded for reporting, not enforced.
    """

    values: np.ndarray
    h: float
    class_k: float = 0.0
    class_delta: float = 0.0

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("symbol grid must be square (N y-points x N modes)")

    @classmethod
    def from_function(cls, fn, h: float, n: int, class_k: float = 0.0,
                      class_delta: float = 0.0) -> "GridSymbol":
        ys = grid_y(n)
        etas = h * mode_numbers(n)
        vals = np.asarray(fn(ys[:, None], etas[None, :]), dtype=complex)
        vals = np.broadcast_to(vals, (n, n)).copy()
        return cls(vals, h, class_k, class_delta)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def etas(self) -> np.ndarray:
        return self.h * mode_numbers(self.n)

    def class_report(self, max_order: int = 4) -> dict:
        """Measured sup |d_y^a a| / (h^{-delta a} <eta>^k) for a <= max_order."""
        weight = (1.0 + self.etas ** 2) ** (self.class_k / 2.0)
        out = {}
        for alpha in range(max_order + 1):
            d = y_derivative(self, alpha)
            ratio = np.abs(d) / (self.h ** (-self.class_delta * alpha) * weight[None, :])
            out[alpha] = float(ratio.max())
        return out

    def to_csv(self, path) -> None:
        ys = grid_y(self.n)
        etas = self.etas
        with open(path, "w") as fh:
            fh.write("y,eta,re,im\n")
            for j in range(self.n):
                for i in range(self.n):
                    v = self.values[j, i]
                    fh.write(f"{ys[j]:.17g},{etas[i]:.17g},{v.real:.17g},{v.imag:.17g}\n")


def quantize(a: GridSymbol, f: ModeFunction) -> ModeFunction:
    """Apply Op_h(a) to f; both must share the grid size."""
    if a.n != f.n:
        raise ValueError(f"grid mismatch: symbol N={a.n}, data N={f.n}")
    g_grid = np.sum(a.values * f.coeffs[None, :] * _basis(a.n), axis=1)
    return ModeFunction(np.fft.fft(g_grid) / a.n, a.h)


def quantize_matrix(a: GridSymbol) -> np.ndarray:
    """Dense mode-space matrix of Op_h(a) (output modes x input modes)."""
    g = a.values * _basis(a.n)
    return np.fft.fft(g, axis=0) / a.n


def op_norm(mat: np.ndarray) -> float:
    """L2 -> L2 operator norm (largest singular value)."""
    return float(np.linalg.svd(mat, compute_uv=False)[0])


def y_derivative(a: GridSymbol, order: int = 1) -> np.ndarray:
    """Spectral d/dy^order of the symbol samples (periodic direction)."""
    if order == 0:
        return a.values
    m = mode_numbers(a.n)
    hat = np.fft.fft(a.values, axis=0)
    return np.fft.ifft(hat * (1j * m[:, None]) ** order, axis=0)


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D1_EDGE = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def _fd_eta_sorted(vals: np.ndarray, step: float) -> np.ndarray:
    """4th-order first derivative along axis 1, monotone grid, spacing step."""
    n = vals.shape[1]
    if n < 5:
        raise ValueError("eta grid too small for the 4th-order stencil")
    out = np.empty_like(vals)
    for k in range(5):
        sl = vals[:, k : n - 4 + k]
        if k == 0:
            acc = _D1[k] * sl
        else:
            acc = acc + _D1[k] * sl
    out[:, 2 : n - 2] = acc
    for j in (0, 1):
        out[:, j] = vals[:, j : j + 5] @ _D1_EDGE
        out[:, n - 1 - j] = -(vals[:, n - 5 - j : n - j] @ _D1_EDGE[::-1])
    return out / step


def eta_derivative(a: GridSymbol, order: int = 1) -> np.ndarray:
    """Finite-difference d/deta^order along the mode axis.

    The fft ladder is reordered to a monotone eta axis, differentiated with
    the centered 4th-order stencil (one-sided at the two ends), and reordered
    back.  Spacing is h.
    """
    vals = np.fft.fftshift(a.values, axes=1)
    for _ in range(order):
        vals = _fd_eta_sorted(vals, a.h)
    return np.fft.ifftshift(vals, axes=1)


def compose_expansion(a: GridSymbol, b: GridSymbol, order: int) -> GridSymbol:
    """Symbol of Op_h(a) Op_h(b) through the stated truncation order.

        c = sum_{alpha <= order} ((-i h)^alpha / alpha!) d_eta^alpha a d_y^alpha b
    """
    if a.n != b.n:
        raise ValueError("grid mismatch")
    if order > 6:
        warnings.warn(
            "eta-axis differentiation beyond order 6 exceeds the sampled "
            "grid's accuracy budget; truncating trust, not the sum",
            RuntimeWarning,
        )
    total = a.values * b.values
    coef = 1.0 + 0.0j
    da = GridSymbol(a.values, a.h, a.class_k, a.class_delta)
    for alpha in range(1, order + 1):
        coef *= (-1j * a.h) / alpha
        da = GridSymbol(eta_derivative(da, 1), a.h, a.class_k, a.class_delta)
        total = total + coef * da.values * y_derivative(b, alpha)
    return GridSymbol(total, a.h, a.class_k + b.class_k, max(a.class_delta, b.class_delta))


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth bump: 1 on |x - center| <= plateau, 0 outside support."""

    center: float = 0.0
    plateau: float = 0.5
    support: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.plateau < self.support):
            raise ValueError("need 0 < plateau < support")


def bump(spec: CutoffSpec = CutoffSpec()):
    """Vectorized callable for the bump; exp(1 - 1/(1 - s^2)) in the collar."""

    def phi(x):
        u = np.abs(np.asarray(x, dtype=float) - spec.center)
        s = (u - spec.plateau) / (spec.support - spec.plateau)
        out = np.zeros_like(u)
        out[s <= 0.0] = 1.0
        mid = (s > 0.0) & (s < 1.0)
        sm = s[mid]
        out[mid] = np.exp(1.0 - 1.0 / (1.0 - sm * sm))
        return out if out.shape else float(out)

    return phi


def make_cutoff(spec: CutoffSpec, h: float, n: int, scale: float = 1.0,
                axis: str = "eta") -> GridSymbol:
    """GridSymbol phi(eta/scale) (axis='eta') or phi(y/scale) (axis='y')."""
    phi = bump(spec)
    if axis == "eta":
        return GridSymbol.from_function(lambda y, eta: phi(eta / scale) + 0j, h, n)
    if axis == "y":
        return GridSymbol.from_function(lambda y, eta: phi(y / scale) + 0j * eta, h, n)
    raise ValueError("axis must be 'eta' or 'y'")

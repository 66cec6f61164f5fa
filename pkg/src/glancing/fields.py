"""Boundary-layer fields and discrete application of the model operator.

A Field stores u(t_i, y_j) on a t-grid times the periodic y-grid.  The model
operator

    P0 = D_t^2 + t + D_y + i mu Op_h(q) + h Op_h(qtilde),  D = -i h d,

is applied discretely: 4th-order finite differences in t (one-sided at the
edges) and exact quantization per t-slice in y.  Norms are semiclassical:
the H1 norm adds |h D u| in both variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .symbols import GridSymbol, ModeFunction, mode_numbers, quantize

__all__ = ["Field", "apply_p0", "field_norms", "layer_t_grid"]


@dataclass(frozen=True)
class Field:
    """u(t_i, y_j) on a uniform t-grid; values has shape (Nt, Ny)."""

    t: np.ndarray
    values: np.ndarray
    h: float

    def __post_init__(self):
        if self.values.shape[0] != self.t.size:
            raise ValueError("values first axis must match t grid")
        dt = np.diff(self.t)
        if self.t.size >= 2 and not np.allclose(dt, dt[0], rtol=1e-10):
            raise ValueError("t grid must be uniform")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size >= 2 else 1.0

    @property
    def trace(self) -> np.ndarray:
        return self.values[0]


def layer_t_grid(h: float, tmax: float, min_per_scale: int = 8) -> np.ndarray:
    """Uniform grid on [0, tmax] resolving the h^(2/3) scale.

    Spacing is h^(2/3)/min_per_scale; a guard refuses grids that would
    undersample the layer.
    """
    scale = h ** (2.0 / 3.0)
    dt = scale / min_per_scale
    nt = int(np.ceil(tmax / dt)) + 1
    grid = np.linspace(0.0, tmax, nt)
    if grid.size >= 2 and scale / (grid[1] - grid[0]) < min_per_scale * (1 - 1e-9):
        raise ValueError("t grid too coarse for the h^(2/3) layer scale")
    return grid


# 4th-order second derivative: interior 5-point stencil, 6-point one-sided
# rows at each edge (coefficients from the degree-5 interpolant).
_C2_INT = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_C2_EDGE0 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0
_C2_EDGE1 = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0


def _d2_t(values: np.ndarray, dt: float) -> np.ndarray:
    if values.shape[0] < 6:
        raise ValueError("need at least 6 t-points for 4th-order differences")
    out = np.empty_like(values)
    for j in range(2, values.shape[0] - 2):
        out[j] = (
            _C2_INT[0] * values[j - 2]
            + _C2_INT[1] * values[j - 1]
            + _C2_INT[2] * values[j]
            + _C2_INT[3] * values[j + 1]
            + _C2_INT[4] * values[j + 2]
        )
    out[0] = np.tensordot(_C2_EDGE0, values[:6], axes=(0, 0))
    out[1] = np.tensordot(_C2_EDGE1, values[:6], axes=(0, 0))
    out[-1] = np.tensordot(_C2_EDGE0, values[-6:][::-1], axes=(0, 0))
    out[-2] = np.tensordot(_C2_EDGE1, values[-6:][::-1], axes=(0, 0))
    return out / dt**2


def _d1_t(values: np.ndarray, dt: float) -> np.ndarray:
    out = np.gradient(values, dt, axis=0, edge_order=2)
    return out


def _dy_spectral(values: np.ndarray) -> np.ndarray:
    n = values.shape[1]
    m = mode_numbers(n)
    return np.fft.ifft(1j * m[None, :] * np.fft.fft(values, axis=1), axis=1)


def apply_p0(
    field: Field,
    mu: float,
    q: GridSymbol,
    qtilde: GridSymbol | None = None,
) -> Field:
    """P0 u on the field's grid.  q (and qtilde) are tangential symbols."""
    h = field.h
    u = field.values
    if u.shape[1] != q.n:
        raise ValueError("field y-grid does not match symbol grid")
    out = -(h**2) * _d2_t(u, field.dt)
    out = out + field.t[:, None] * u
    out = out + (-1j * h) * _dy_spectral(u)
    for slot in range(u.shape[0]):
        f = ModeFunction.from_grid(u[slot], h)
        term = quantize(q, f).grid() * (1j * mu)
        if qtilde is not None:
            term = term + h * quantize(qtilde, f).grid()
        out[slot] += term
    return Field(field.t, out, h)


def field_norms(field: Field) -> dict:
    """L2 and semiclassical H1 norms of the field.

    Measure: dt average over t times the normalized mean over y (so a
    t-independent field of modulus 1 on a unit-length t-window has norm 1).
    """
    u = field.values
    dt = field.dt
    w = np.full(field.t.size, dt)
    w[0] = w[-1] = dt / 2.0

    def _sq(v):
        return float(np.sum(w[:, None] * np.abs(v) ** 2) / v.shape[1])

    l2sq = _sq(u)
    h = field.h
    dtu = -1j * h * _d1_t(u, dt)
    dyu = -1j * h * _dy_spectral(u)
    h1sq = l2sq + _sq(dtu) + _sq(dyu)
    return {"l2": float(np.sqrt(l2sq)), "h1": float(np.sqrt(h1sq))}

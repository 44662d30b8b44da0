"""Algebraic input data: divisors, theta-type section bases, polynomial maps.

A degree-m line bundle on the rectangular torus is realized through a
unitary factor of automorphy, so |s|^2 of every section is exactly
doubly periodic while the section itself picks up the phase
chi(u) = exp(-2 pi i m u / period_u) when v wraps by period_v.  Sections
are sampled over one fundamental domain; all pointwise pairings
s_a * conj(s_b) of sections of the same degree are genuinely periodic.

The reference Chern connection of this realization has constant curvature
density i*F = 2 pi m / volume.  In the unitary trivialization its
connection form is A = i (2 pi m / volume) v du, shifted by i * d(w) when
a conformal frame factor e^w is installed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, ValidationError
from .geometry import PlaneGrid, TorusGeometry, fft_workers, integrate, laplacian

_TRUNC = 1e-16  # theta series truncation relative to the running maximum


# ---------------------------------------------------------------------------
# Divisors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Divisor:
    """Finite set of points with positive integer multiplicities."""

    points: tuple
    multiplicities: tuple

    def __post_init__(self):
        pts = tuple((float(u), float(v)) for u, v in self.points)
        mult = tuple(int(n) for n in self.multiplicities)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "multiplicities", mult)
        if len(pts) != len(mult):
            raise ValidationError("divisor points and multiplicities differ in length")
        if any(n < 1 for n in mult):
            raise ValidationError("divisor multiplicities must be >= 1")

    @property
    def degree(self):
        return sum(self.multiplicities)

    def require_inside(self, grid: PlaneGrid):
        for u, v in self.points:
            if not (abs(u) < grid.radius and abs(v) < grid.radius):
                raise ValidationError(
                    f"divisor point ({u}, {v}) lies outside the truncation square "
                    f"[-{grid.radius}, {grid.radius}]^2"
                )


# ---------------------------------------------------------------------------
# Theta-type section bases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectionBasis:
    """Basis of holomorphic sections of the degree-m bundle on a torus grid.

    ``fields`` has shape (dim, n_u, n_v); dim = max(m, 1) and the m = 0
    basis is the single constant section 1.  ``frame_w`` is an optional real
    conformal log-factor already applied to the stored samples (sections
    were multiplied by e^w); it shifts the reference connection by i*dw.
    """

    geom: TorusGeometry
    bundle_degree: int
    fields: np.ndarray
    frame_w: np.ndarray | None = None

    @property
    def dim(self):
        return self.fields.shape[0]

    @property
    def background_curvature_density(self):
        return 2.0 * np.pi * self.bundle_degree / self.geom.volume

    def section(self, coeff):
        """Contract a coefficient vector with the basis fields."""
        coeff = np.asarray(coeff, dtype=complex)
        if coeff.shape != (self.dim,):
            raise GridMismatchError(
                f"coefficient vector has length {coeff.shape}, basis dimension is {self.dim}"
            )
        return np.tensordot(coeff, self.fields, axes=(0, 0))

    def wrap_phase_v(self):
        """chi(u): phase picked up by sections when v increases by period_v."""
        u = np.arange(self.geom.n_u) * self.geom.du
        return np.exp(-2j * np.pi * self.bundle_degree * u / self.geom.period_u)

    def gram(self):
        g = np.empty((self.dim, self.dim), dtype=complex)
        for a in range(self.dim):
            for b in range(self.dim):
                g[a, b] = integrate(self.fields[a] * np.conj(self.fields[b]), self.geom)
        return g

    def rescaled(self, w):
        """Apply a further conformal frame factor e^w to every section."""
        w = np.asarray(w, dtype=float)
        new_frame = w if self.frame_w is None else self.frame_w + w
        return replace(self, fields=self.fields * np.exp(w), frame_w=new_frame)

    def curvature_density(self):
        """i*F of the (frame-adjusted) reference connection, as a field."""
        base = np.full(self.geom.shape, self.background_curvature_density)
        if self.frame_w is not None:
            base = base + laplacian(self.frame_w, self.geom)
        return base

    # -- covariant derivatives ------------------------------------------------

    def _dv_twisted(self, s):
        """Spectral d/dv of a twisted section (plain FFT is invalid in v)."""
        g = self.geom
        m = self.bundle_degree
        if m == 0:
            kv = 2j * np.pi * np.fft.fftfreq(g.n_v, d=g.dv)
            return sfft.ifft(kv[None, :] * sfft.fft(s, axis=1, workers=fft_workers()), axis=1,
                             workers=fft_workers())
        uu, vv = g.coords()
        demod = np.exp(2j * np.pi * m * uu * vv / (g.period_u * g.period_v))
        gper = s * demod
        kv = 2j * np.pi * np.fft.fftfreq(g.n_v, d=g.dv)
        dg = sfft.ifft(kv[None, :] * sfft.fft(gper, axis=1, workers=fft_workers()), axis=1,
                       workers=fft_workers())
        theta_rate = -2j * np.pi * m * uu / (g.period_u * g.period_v)
        return dg / demod + theta_rate * s

    def _du(self, s):
        g = self.geom
        ku = 2j * np.pi * np.fft.fftfreq(g.n_u, d=g.du)
        return sfft.ifft(ku[:, None] * sfft.fft(s, axis=0, workers=fft_workers()), axis=0,
                         workers=fft_workers())

    def covariant_derivative(self, s):
        """(nabla_u s, nabla_v s) for the frame-adjusted Chern connection."""
        g = self.geom
        uu, vv = g.coords()
        au = 2.0 * np.pi * self.bundle_degree * vv / g.volume
        av = np.zeros_like(vv)
        if self.frame_w is not None:
            wu, wv = _periodic_gradient(self.frame_w, g)
            au = au - wv
            av = av + wu
        du = self._du(s) + 1j * au * s
        dv = self._dv_twisted(s) + 1j * av * s
        return du, dv

    def dbar_energy_density(self, s):
        """2 |dbar_B s|^2, the antiholomorphic energy density."""
        du, dv = self.covariant_derivative(s)
        return np.abs(du + 1j * dv) ** 2


def _periodic_gradient(w, geom):
    ku = 2j * np.pi * np.fft.fftfreq(geom.n_u, d=geom.du)
    kv = 2j * np.pi * np.fft.fftfreq(geom.n_v, d=geom.dv)
    wh = sfft.fft2(w, workers=fft_workers())
    wu = sfft.ifft2(ku[:, None] * wh, workers=fft_workers()).real
    wv = sfft.ifft2(kv[None, :] * wh, workers=fft_workers()).real
    return wu, wv


def theta_basis(geom: TorusGeometry, m: int) -> SectionBasis:
    """Holomorphic section basis of the degree-m bundle as truncated theta series.

    Characteristics j/m, j = 0..m-1, on the rectangular lattice; each series
    term is dropped once it falls below 1e-16 of the running maximum.  The
    Gaussian weight exp(-pi m v^2 / volume) makes the factor of automorphy
    unitary, so |s_j|^2 is exactly periodic.  For m = 0 the basis is the
    constant section 1.
    """
    if m < 0:
        raise ValidationError("bundle degree m must be >= 0")
    if m == 0:
        fields = np.ones((1,) + geom.shape, dtype=complex)
        return SectionBasis(geom=geom, bundle_degree=0, fields=fields)

    uu, vv = geom.coords()
    w = (uu + 1j * vv) / geom.period_u          # normalized coordinate
    tau = 1j * geom.period_v / geom.period_u    # rectangular lattice modulus
    gauss = np.exp(-np.pi * m * vv**2 / geom.volume)

    fields = np.empty((m,) + geom.shape, dtype=complex)
    for j in range(m):
        total = np.zeros(geom.shape, dtype=complex)
        running_max = 0.0
        # symmetric sweep n = 0, -1, 1, -2, 2, ... until terms are negligible
        for n in _symmetric_integers():
            a = n + j / m
            term = np.exp(1j * np.pi * m * tau * a * a + 2j * np.pi * m * a * w)
            tmax = float(np.max(np.abs(term)))
            total += term
            running_max = max(running_max, tmax)
            if abs(n) >= 2 and tmax < _TRUNC * running_max:
                break
        fields[j] = total * gauss
    return SectionBasis(geom=geom, bundle_degree=m, fields=fields)


def _symmetric_integers():
    yield 0
    n = 1
    while True:
        yield -n
        yield n
        n += 1


# ---------------------------------------------------------------------------
# Polynomial maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolynomialMap:
    """f(z) = sum_i gamma_i z^i with coefficient vectors in the section space."""

    coefficients: np.ndarray  # shape (d+1, dim), index i = power of z

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=complex))
        object.__setattr__(self, "coefficients", c)
        if np.linalg.norm(c[-1]) == 0.0:
            raise ValidationError("leading coefficient gamma_d must be nonzero")

    @property
    def degree(self):
        return self.coefficients.shape[0] - 1

    @property
    def dim(self):
        return self.coefficients.shape[1]

    def leading(self):
        return self.coefficients[-1]

    def scaled(self, c):
        if c == 0:
            raise ValidationError("cannot scale a polynomial map by zero")
        return PolynomialMap(self.coefficients * c)


def evaluate_polynomial_map(f: PolynomialMap, basis: SectionBasis, z: complex):
    """Pointwise value of f(z) contracted with the basis: a field on the torus."""
    if f.dim != basis.dim:
        raise GridMismatchError(
            f"polynomial map has coefficient dimension {f.dim}, basis has {basis.dim}"
        )
    out = np.zeros(basis.geom.shape, dtype=complex)
    zp = 1.0 + 0.0j
    for i in range(f.degree + 1):
        out += zp * basis.section(f.coefficients[i])
        zp *= z
    return out


PROPORTIONALITY_TOL = 1e-12


def _proportional(a, b):
    """Is a a complex multiple of b?  Normalized rejection norm < 1e-12."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0:
        return True  # the zero vector is 0 * b
    proj = np.vdot(b, a) / nb**2
    return np.linalg.norm(a - proj * b) / na < PROPORTIONALITY_TOL


def gap_index(f: PolynomialMap):
    """Smallest m >= 1 with gamma_{d-m} not proportional to gamma_d.

    Returns the string "product" when every coefficient is proportional to
    the leading one (then f = gamma_d * f_0 for a scalar polynomial f_0).
    """
    d = f.degree
    if d == 0:
        raise ValidationError("gap index is undefined for degree-0 maps")
    gd = f.leading()
    for m in range(1, d + 1):
        if not _proportional(f.coefficients[d - m], gd):
            return m
    return "product"


# ---------------------------------------------------------------------------
# Zero detection by winding numbers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroLocusResult:
    divisor: Divisor | None
    identically_zero: bool
    total_winding: int


_EDGE_SAMPLES = 8


def _cell_winding(c00, c10, c11, c01):
    """Winding of the bilinear interpolant around one cell, all cells at once.

    Each corner array has the shape of the cell lattice.  Edges are
    subsampled so that windings up to +-3 are resolved without hitting the
    +-pi wrap ambiguity of even multiplicities.
    """
    t = (np.arange(_EDGE_SAMPLES) / _EDGE_SAMPLES)[:, None, None]
    loop = np.concatenate([
        c00 * (1 - t) + c10 * t,
        c10 * (1 - t) + c11 * t,
        c11 * (1 - t) + c01 * t,
        c01 * (1 - t) + c00 * t,
    ])
    ang = np.angle(loop)
    inc = np.diff(ang, axis=0, append=ang[:1])
    inc = (inc + np.pi) % (2.0 * np.pi) - np.pi
    w = inc.sum(axis=0) / (2.0 * np.pi)
    return np.rint(w).astype(int)


def _refine_zero(c00, c10, c11, c01):
    """Newton on the bilinear interpolant, from the cell center; returns (s, t)
    in [0,1]^2 or the center when the iteration leaves the cell."""
    s = t = 0.5
    for _ in range(12):
        val = (c00 * (1 - s) * (1 - t) + c10 * s * (1 - t)
               + c01 * (1 - s) * t + c11 * s * t)
        ds = (c10 - c00) * (1 - t) + (c11 - c01) * t
        dt = (c01 - c00) * (1 - s) + (c11 - c10) * s
        jac = np.array([[ds.real, dt.real], [ds.imag, dt.imag]])
        det = np.linalg.det(jac)
        if abs(det) < 1e-300:
            break
        step = np.linalg.solve(jac, [val.real, val.imag])
        s, t = s - step[0], t - step[1]
        if not (-0.5 <= s <= 1.5 and -0.5 <= t <= 1.5):
            return 0.5, 0.5
    return min(max(s, 0.0), 1.0), min(max(t, 0.0), 1.0)


def zero_locus(fld, grid, wrap_phase_v=None):
    """Divisor estimate of a complex field from plaquette winding numbers.

    On the torus the field may be a twisted section; ``wrap_phase_v`` (an
    array chi(u)) supplies the phase picked up across the v-wraparound.  Cells
    with nonzero winding become divisor points (winding = multiplicity) with
    sub-cell bilinear refinement.  A field that is everywhere below 1e-14 in
    magnitude yields the identically-zero verdict instead.
    """
    vals = np.asarray(fld, dtype=complex)
    scale = float(np.max(np.abs(vals)))
    if scale < 1e-14:
        return ZeroLocusResult(divisor=None, identically_zero=True, total_winding=0)

    if isinstance(grid, TorusGeometry):
        su = np.concatenate([vals, vals[:1, :]], axis=0)
        if wrap_phase_v is None:
            wrap_col = su[:, :1]
        else:
            chi = np.concatenate([wrap_phase_v, wrap_phase_v[:1]])
            wrap_col = su[:, :1] * chi[:, None]
        s = np.concatenate([su, wrap_col], axis=1)
        x0 = np.arange(grid.n_u) * grid.du
        y0 = np.arange(grid.n_v) * grid.dv
        hx, hy = grid.du, grid.dv
    elif isinstance(grid, PlaneGrid):
        s = vals
        ax = grid.axis_coords()
        x0, y0 = ax[:-1], ax[:-1]
        hx = hy = grid.h
    else:
        raise GridMismatchError("zero_locus expects a torus or plane grid")

    c00 = s[:-1, :-1]
    c10 = s[1:, :-1]
    c11 = s[1:, 1:]
    c01 = s[:-1, 1:]
    if np.any(np.abs(np.stack([c00, c10, c11, c01])) == 0.0):
        raise ValidationError(
            "field has an exact zero on a cell corner; perturb the grid offset"
        )
    wind = _cell_winding(c00, c10, c11, c01)

    pts, mult = [], []
    for i, j in zip(*np.nonzero(wind)):
        st, tt = _refine_zero(c00[i, j], c10[i, j], c11[i, j], c01[i, j])
        pts.append((x0[i] + st * hx, y0[j] + tt * hy))
        mult.append(abs(int(wind[i, j])))
    total = int(wind.sum())
    div = Divisor(tuple(pts), tuple(mult)) if pts else Divisor((), ())
    return ZeroLocusResult(divisor=div, identically_zero=False, total_winding=total)


def torus_point_distance(p, q, geom):
    """Distance on the torus between two points, respecting the wrap."""
    du = abs(p[0] - q[0]) % geom.period_u
    dv = abs(p[1] - q[1]) % geom.period_v
    du = min(du, geom.period_u - du)
    dv = min(dv, geom.period_v - dv)
    return float(np.hypot(du, dv))


def divisor_hausdorff(a: Divisor, b: Divisor, geom=None):
    """Hausdorff distance between the point sets of two divisors."""
    if not a.points or not b.points:
        return float("inf") if (a.points or b.points) else 0.0
    if geom is None:
        dist = lambda p, q: float(np.hypot(p[0] - q[0], p[1] - q[1]))
    else:
        dist = lambda p, q: torus_point_distance(p, q, geom)
    d_ab = max(min(dist(p, q) for q in b.points) for p in a.points)
    d_ba = max(min(dist(p, q) for q in a.points) for p in b.points)
    return max(d_ab, d_ba)

"""Discretized domains and the elliptic operators shared by every solver.

Three domains are supported: a flat rectangular torus (spectral
differentiation), a truncated plane [-R, R]^2 with homogeneous Dirichlet
boundary (5-point stencil, cell-centered nodes), and their metric product.

Sign convention: ``laplacian`` is the geometer's nonnegative Laplacian
Delta = -(d^2/du^2 + d^2/dv^2), so its spectrum is >= 0 and
Delta sin(2 pi u) = (2 pi)^2 sin(2 pi u) on the unit torus.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, SolverError, ValidationError


def fft_workers():
    """Worker count for scipy.fft, overridable via VORTEXLAB_THREADS."""
    try:
        return max(1, int(os.environ.get("VORTEXLAB_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TorusGeometry:
    """Flat rectangular torus R^2 / (period_u Z x period_v Z).

    ``synthetic_curvature`` is the prescribed constant background K0 <= 0
    that stands in for the Gaussian curvature in every curvature term.
    Grid sizes must be powers of two so all transforms stay radix-2.
    """

    period_u: float
    period_v: float
    n_u: int
    n_v: int
    synthetic_curvature: float = 0.0

    def __post_init__(self):
        errs = []
        if self.period_u <= 0 or self.period_v <= 0:
            errs.append("torus periods must be positive")
        for n in (self.n_u, self.n_v):
            if n < 2 or (n & (n - 1)) != 0:
                errs.append(f"grid size {n} is not a power of two >= 2")
        if self.synthetic_curvature > 0:
            errs.append("synthetic_curvature K0 must be <= 0")
        if errs:
            raise ValidationError(errs)

    @property
    def volume(self):
        return self.period_u * self.period_v

    @property
    def du(self):
        return self.period_u / self.n_u

    @property
    def dv(self):
        return self.period_v / self.n_v

    @property
    def cell_area(self):
        return self.du * self.dv

    @property
    def shape(self):
        return (self.n_u, self.n_v)

    def coords(self):
        """Node coordinates (u starts at 0): meshgrid arrays of shape (n_u, n_v)."""
        u = np.arange(self.n_u) * self.du
        v = np.arange(self.n_v) * self.dv
        return np.meshgrid(u, v, indexing="ij")

    def laplacian_symbol(self):
        """Fourier multiplier of the nonnegative Laplacian, shape (n_u, n_v)."""
        ku = 2.0 * np.pi * np.fft.fftfreq(self.n_u, d=self.du)
        kv = 2.0 * np.pi * np.fft.fftfreq(self.n_v, d=self.dv)
        return ku[:, None] ** 2 + kv[None, :] ** 2


@dataclass(frozen=True)
class PlaneGrid:
    """Truncated plane [-R, R]^2, cell-centered nodes, Dirichlet-zero ghosts.

    The n x n nodes sit at -R + (j + 1/2) h with h = 2R/n; ghost values one
    spacing outside the square are zero, which is the truncation rule for
    fields that decay at infinity.
    """

    radius: float
    n: int
    boundary_rule: str = "dirichlet-zero"

    def __post_init__(self):
        errs = []
        if self.radius <= 0:
            errs.append("plane radius must be positive")
        if self.n < 4:
            errs.append("plane grid needs n >= 4")
        if self.boundary_rule != "dirichlet-zero":
            errs.append(f"unsupported boundary rule {self.boundary_rule!r}")
        if errs:
            raise ValidationError(errs)

    @property
    def h(self):
        return 2.0 * self.radius / self.n

    @property
    def cell_area(self):
        return self.h * self.h

    @property
    def shape(self):
        return (self.n, self.n)

    def axis_coords(self):
        return -self.radius + (np.arange(self.n) + 0.5) * self.h

    def coords(self):
        x = self.axis_coords()
        return np.meshgrid(x, x, indexing="ij")

    def radii(self):
        uu, vv = self.coords()
        return np.hypot(uu, vv)

    def dirichlet_eigenvalues(self):
        """Eigenvalues of the 1-D (2,-1)/h^2 stencil, DST-I ordering."""
        k = np.arange(1, self.n + 1)
        return (4.0 / self.h**2) * np.sin(np.pi * k / (2.0 * (self.n + 1))) ** 2

    def boundary_ring_mask(self, width=1):
        m = np.zeros(self.shape, dtype=bool)
        m[:width, :] = m[-width:, :] = True
        m[:, :width] = m[:, -width:] = True
        return m


@dataclass(frozen=True)
class ProductGrid:
    """Product of a truncated plane and a torus; fields have shape
    (n, n, n_u, n_v) with the plane axes first."""

    plane: PlaneGrid
    torus: TorusGeometry

    @property
    def shape(self):
        return self.plane.shape + self.torus.shape

    @property
    def cell_volume(self):
        return self.plane.cell_area * self.torus.cell_area

    @property
    def total_points(self):
        return self.plane.n**2 * self.torus.n_u * self.torus.n_v


@dataclass(frozen=True)
class ScalarField:
    """A sampled scalar (real or complex) tagged with its grid."""

    values: np.ndarray
    grid: object = field(compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        object.__setattr__(self, "values", vals)
        if vals.shape != self.grid.shape:
            raise GridMismatchError(
                f"field shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValidationError("field contains non-finite entries")


def _unwrap(fld, grid):
    """Accept ScalarField or bare ndarray; check against the given grid."""
    if isinstance(fld, ScalarField):
        if grid is not None and fld.grid != grid:
            raise GridMismatchError("field grid differs from the requested grid")
        return fld.values, fld.grid
    if grid is None:
        raise GridMismatchError("bare arrays need an explicit grid")
    vals = np.asarray(fld)
    if vals.shape != grid.shape:
        raise GridMismatchError(
            f"field shape {vals.shape} does not match grid shape {grid.shape}"
        )
    return vals, grid


# ---------------------------------------------------------------------------
# Laplacians
# ---------------------------------------------------------------------------

def _torus_laplacian(vals, geom):
    sym = geom.laplacian_symbol()
    if np.iscomplexobj(vals):
        return sfft.ifft2(sym * sfft.fft2(vals, workers=fft_workers()), workers=fft_workers())
    out = sfft.irfft2(
        sym[:, : geom.n_v // 2 + 1] * sfft.rfft2(vals, workers=fft_workers()),
        s=(geom.n_u, geom.n_v),
        workers=fft_workers(),
    )
    return out


def _plane_laplacian(vals, grid):
    h2 = grid.h * grid.h
    out = 4.0 * vals.copy()
    out[1:, ...] -= vals[:-1, ...]
    out[:-1, ...] -= vals[1:, ...]
    out[:, 1:, ...] -= vals[:, :-1, ...]
    out[:, :-1, ...] -= vals[:, 1:, ...]
    return out / h2


def _product_laplacian(vals, grid):
    lap_p = _plane_laplacian(vals, grid.plane)
    sym = grid.torus.laplacian_symbol()
    if np.iscomplexobj(vals):
        lap_t = sfft.ifftn(
            sym * sfft.fftn(vals, axes=(2, 3), workers=fft_workers()),
            axes=(2, 3),
            workers=fft_workers(),
        )
    else:
        sym_r = sym[:, : grid.torus.n_v // 2 + 1]
        lap_t = sfft.irfftn(
            sym_r * sfft.rfftn(vals, axes=(2, 3), workers=fft_workers()),
            axes=(2, 3),
            s=grid.torus.shape,
            workers=fft_workers(),
        )
    return lap_p + lap_t


def laplacian(fld, grid=None):
    """Nonnegative Laplacian on whichever grid the field lives on.

    Torus directions are differentiated spectrally (exact on bandlimited
    fields); the plane uses the 5-point stencil with Dirichlet-zero ghost
    values; the product applies the sum of both.
    """
    vals, grid = _unwrap(fld, grid)
    if isinstance(grid, TorusGeometry):
        out = _torus_laplacian(vals, grid)
    elif isinstance(grid, PlaneGrid):
        out = _plane_laplacian(vals, grid)
    elif isinstance(grid, ProductGrid):
        out = _product_laplacian(vals, grid)
    else:
        raise GridMismatchError(f"unknown grid type {type(grid).__name__}")
    if isinstance(fld, ScalarField):
        return ScalarField(out, grid)
    return out


def integrate(fld, grid=None):
    """Uniform-weight quadrature: sum of values times cell measure."""
    vals, grid = _unwrap(fld, grid)
    if isinstance(grid, TorusGeometry) or isinstance(grid, PlaneGrid):
        return vals.sum() * grid.cell_area
    if isinstance(grid, ProductGrid):
        return vals.sum() * grid.cell_volume
    raise GridMismatchError(f"unknown grid type {type(grid).__name__}")


def l2_norm(fld, grid=None):
    vals, grid = _unwrap(fld, grid)
    return float(np.sqrt(integrate(np.abs(vals) ** 2, grid).real))


def inner(a, b, grid):
    av, _ = _unwrap(a, grid)
    bv, _ = _unwrap(b, grid)
    return integrate(np.conj(av) * bv, grid)


# ---------------------------------------------------------------------------
# Constant-coefficient solves (used directly and as preconditioners)
# ---------------------------------------------------------------------------

def torus_constant_solve(rhs, geom, shift):
    """(Delta + shift)^(-1) rhs on the torus, spectrally. shift > 0."""
    sym = geom.laplacian_symbol() + shift
    if np.iscomplexobj(rhs):
        return sfft.ifft2(sfft.fft2(rhs, workers=fft_workers()) / sym, workers=fft_workers())
    return sfft.irfft2(
        sfft.rfft2(rhs, workers=fft_workers()) / sym[:, : geom.n_v // 2 + 1],
        s=(geom.n_u, geom.n_v),
        workers=fft_workers(),
    )


def plane_constant_solve(rhs, grid, shift):
    """(Delta + shift)^(-1) rhs on the plane via DST-I diagonalization."""
    lam = grid.dirichlet_eigenvalues()
    sym = lam[:, None] + lam[None, :] + shift
    coef = sfft.dstn(rhs, type=1, axes=(0, 1), norm="ortho", workers=fft_workers())
    return sfft.idstn(coef / sym, type=1, axes=(0, 1), norm="ortho", workers=fft_workers())


def product_constant_solve(rhs, grid, shift):
    """(Delta_C + Delta_Sigma + shift)^(-1) rhs via DST-I x FFT factorization."""
    lam = grid.plane.dirichlet_eigenvalues()
    sym_p = lam[:, None] + lam[None, :]
    sym_t = grid.torus.laplacian_symbol()
    coef = sfft.dstn(rhs, type=1, axes=(0, 1), norm="ortho", workers=fft_workers())
    coef = sfft.rfftn(coef, axes=(2, 3), workers=fft_workers())
    coef /= sym_p[:, :, None, None] + sym_t[None, None, :, : grid.torus.n_v // 2 + 1] + shift
    coef = sfft.irfftn(coef, axes=(2, 3), s=grid.torus.shape, workers=fft_workers())
    return sfft.idstn(coef, type=1, axes=(0, 1), norm="ortho", workers=fft_workers())


def constant_solve(rhs, grid, shift):
    if isinstance(grid, TorusGeometry):
        return torus_constant_solve(rhs, grid, shift)
    if isinstance(grid, PlaneGrid):
        return plane_constant_solve(rhs, grid, shift)
    if isinstance(grid, ProductGrid):
        return product_constant_solve(rhs, grid, shift)
    raise GridMismatchError(f"unknown grid type {type(grid).__name__}")


# ---------------------------------------------------------------------------
# Helmholtz solver
# ---------------------------------------------------------------------------

def solve_helmholtz(V, k, grid=None, tol=1e-12, max_iter=2000):
    """Solve (Delta + V) u = k with V >= 0, V not identically zero.

    Conjugate gradients preconditioned by the constant-coefficient inverse
    (Delta + mean V)^(-1), applied spectrally on the torus and through the
    DST-I factorization on the plane and the product.  Returns u with
    ||Delta u + V u - k||_2 < tol * ||k||_2.
    """
    Vv, grid = _unwrap(V, grid)
    kv, _ = _unwrap(k, grid)
    if np.any(Vv < 0):
        raise ValidationError("Helmholtz potential must be nonnegative")
    vbar = float(integrate(Vv, grid) / _grid_measure(grid))
    if isinstance(grid, TorusGeometry) and vbar <= 0:
        # On a closed surface Delta alone kills constants; V must carry mass.
        raise ValidationError("Helmholtz potential is identically zero: operator not invertible")
    if vbar < 0:
        raise ValidationError("Helmholtz potential has negative mean")

    def apply_op(x):
        return laplacian(x, grid) + Vv * x

    def precond(r):
        return constant_solve(r, grid, max(vbar, 1e-300))

    u, hist = pcg(apply_op, precond, kv, grid, tol=tol, max_iter=max_iter)
    if isinstance(V, ScalarField):
        return ScalarField(u, grid)
    return u


def _grid_measure(grid):
    if isinstance(grid, TorusGeometry):
        return grid.volume
    if isinstance(grid, PlaneGrid):
        return (2.0 * grid.radius) ** 2
    return (2.0 * grid.plane.radius) ** 2 * grid.torus.volume


def pcg(apply_op, precond, rhs, grid, tol=1e-12, max_iter=2000, x0=None):
    """Preconditioned conjugate gradients with deterministic reductions.

    Convergence criterion is relative to ||rhs||_2; raises SolverError with
    the residual history if the iteration cap is reached.
    """
    real_in = not np.iscomplexobj(rhs)
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - apply_op(x) if x0 is not None else rhs.copy()
    bnorm = l2_norm(rhs, grid)
    if bnorm == 0.0:
        return x, [0.0]
    z = precond(r)
    p = z.copy()
    rz = inner(r, z, grid).real
    hist = [l2_norm(r, grid) / bnorm]
    for _ in range(max_iter):
        Ap = apply_op(p)
        alpha = rz / inner(p, Ap, grid).real
        x += alpha * p
        r -= alpha * Ap
        rel = l2_norm(r, grid) / bnorm
        hist.append(rel)
        if rel < tol:
            return (x.real if real_in and np.iscomplexobj(x) else x), hist
        z = precond(r)
        rz_new = inner(r, z, grid).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"Helmholtz CG failed to reach {tol:g} in {max_iter} iterations "
        f"(final relative residual {hist[-1]:.3e})",
        residual_history=hist,
    )

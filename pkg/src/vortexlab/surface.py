"""Vortices on the flat torus with prescribed constant background curvature.

Given a holomorphic section s of the degree-m bundle, the constrained
Kazdan-Warner problem looks for a real conformal factor w with

    mu_Sigma(w) = i*F_B0 + Delta w + (1/2) K0 + (1/2) |s|^2 e^{2w} = 0,

where i*F_B0 is the (constant) curvature density of the reference
connection.  Integrating over the torus forces the constraint

    (1/2) int |s|^2 e^{2w} = c := -(1/2) K0 Vol - 2 pi m > 0,

so the mean of w is eliminated exactly and Newton runs on the mean-zero
subspace (the constraint set is a graph over it).  Solvability demands
c > 0; c <= 0 raises a structured error naming the constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .bundles import SectionBasis
from .errors import GridMismatchError, SolvabilityError, SolverError, ValidationError
from .geometry import (
    TorusGeometry,
    fft_workers,
    integrate,
    l2_norm,
    laplacian,
    pcg,
    torus_constant_solve,
)


@dataclass
class SurfaceVortex:
    """Solved torus vortex: conformal factor, section, curvature, constraint."""

    geom: TorusGeometry
    basis: SectionBasis
    w: np.ndarray
    sigma: np.ndarray
    curvature_density: np.ndarray
    residual_norm: float
    c: float
    iterations: list


def solvability_constant(geom: TorusGeometry, m: int):
    """c = -(1/2) K0 Vol - 2 pi m; vortices exist iff c > 0."""
    return -0.5 * geom.synthetic_curvature * geom.volume - 2.0 * np.pi * m


def _require_solvable(geom, m):
    c = solvability_constant(geom, m)
    if c <= 0:
        raise SolvabilityError(
            f"solvability constraint violated: c = -K0*Vol/2 - 2*pi*m = {c:.6g} <= 0 "
            f"(K0 = {geom.synthetic_curvature}, Vol = {geom.volume:.6g}, m = {m}); "
            "need -K0*Vol/2 > 2*pi*m",
            constraint="c = -K0*Vol/2 - 2*pi*m > 0",
        )
    return c


def surface_residual(w, s_sq, basis: SectionBasis):
    """mu_Sigma(w) for the section with |s|^2 = s_sq."""
    g = basis.geom
    const = basis.background_curvature_density + 0.5 * g.synthetic_curvature
    out = laplacian(w, g) + 0.5 * s_sq * np.exp(2.0 * w) + const
    if basis.frame_w is not None:
        out = out + laplacian(basis.frame_w, g)
    return out


def solve_surface(geom: TorusGeometry, basis: SectionBasis, coeff,
                  tol=1e-12, max_newton=60, damping_floor=1e-6,
                  initial_w=None) -> SurfaceVortex:
    """Newton on the mean-zero subspace with the mean eliminated exactly.

    The linearization Delta + V gains a rank-one term from the eliminated
    mean; the Newton direction is recovered from two CG solves by the
    Sherman-Morrison formula.
    """
    if geom != basis.geom:
        raise GridMismatchError("basis lives on a different torus")
    m = basis.bundle_degree
    c = _require_solvable(geom, m)
    s = basis.section(coeff)
    s_sq = np.abs(s) ** 2
    smax = float(np.max(s_sq))
    if smax == 0.0:
        raise ValidationError("section is identically zero")

    vol = geom.volume

    def mean(f):
        return float(integrate(f, geom)) / vol

    def with_mean(w_perp):
        # exact elimination: e^{2 wbar} = c / ((1/2) int |s|^2 e^{2 w_perp})
        mass = 0.5 * float(integrate(s_sq * np.exp(2.0 * w_perp), geom))
        wbar = 0.5 * np.log(c / mass)
        return w_perp + wbar

    w_perp = np.zeros(geom.shape)
    if initial_w is not None:
        w_perp = np.asarray(initial_w, float)
        w_perp = w_perp - mean(w_perp)

    w = with_mean(w_perp)
    res = surface_residual(w, s_sq, basis)
    rnorm = l2_norm(res, geom)
    history = [(0, rnorm, 1.0)]
    for it in range(1, max_newton + 1):
        if rnorm < tol:
            break
        V = s_sq * np.exp(2.0 * w)
        vbar = max(mean(V), 1e-300)
        wV = integrate(V, geom)

        def apply_op(y, V=V):
            out = laplacian(y, geom) + V * y
            return out - mean(out)

        def precond(r, vbar=vbar):
            return torus_constant_solve(r, geom, vbar)

        rhs = -(res - mean(res))
        # A x = rhs and A x1 = P V for the Sherman-Morrison correction
        x, _ = pcg(apply_op, precond, rhs, geom, tol=1e-13, max_iter=2000)
        pv = V - mean(V)
        x1, _ = pcg(apply_op, precond, pv, geom, tol=1e-13, max_iter=2000)

        def vmean(y, V=V, wV=wV):
            return float(integrate(V * y, geom)) / wV

        # J = A + (P V) vmean(.): d = x - x1 * vmean(x)/(1 + vmean(x1))
        denom = 1.0 + vmean(x1)
        step = x - x1 * (vmean(x) / denom)
        step = step - mean(step)

        t = 1.0
        while True:
            trial_perp = w_perp + t * step
            trial = with_mean(trial_perp)
            tres = surface_residual(trial, s_sq, basis)
            tnorm = l2_norm(tres, geom)
            if tnorm < rnorm:
                break
            t *= 0.5
            if t < damping_floor:
                raise SolverError(
                    f"surface Newton stagnated at residual {rnorm:.3e}",
                    residual_history=[r for _, r, _ in history],
                )
        w_perp, w, res, rnorm = trial_perp, trial, tres, tnorm
        history.append((it, rnorm, t))
    else:
        if rnorm >= tol:
            raise SolverError(
                f"surface Newton did not reach tol {tol:g} (residual {rnorm:.3e})",
                residual_history=[r for _, r, _ in history],
            )

    sigma = np.exp(w) * s
    curvature = basis.curvature_density() + laplacian(w, geom)
    return SurfaceVortex(geom=geom, basis=basis, w=w, sigma=sigma,
                         curvature_density=curvature, residual_norm=rnorm,
                         c=c, iterations=history)


def normalize_leading_coefficient(basis: SectionBasis, gamma_d, geom: TorusGeometry,
                                  tol=1e-12):
    """Rescale the frame so that (B0, gamma_d) is itself a vortex.

    Solves the surface problem for the leading coefficient and multiplies
    every basis section by e^w.  In the new frame the constant-curvature
    reference connection plus the rescaled gamma_d satisfy the vortex
    equation exactly, which is the normalization the 4-dimensional
    construction assumes.
    """
    gamma_d = np.asarray(gamma_d, dtype=complex)
    if np.linalg.norm(gamma_d) == 0.0:
        raise ValidationError("leading coefficient must be nonzero")
    vortex = solve_surface(geom, basis, gamma_d, tol=tol)
    return vortex, basis.rescaled(vortex.w)


# ---------------------------------------------------------------------------
# Gauge-minimized Sobolev distance between fiber configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiberConfig:
    """A fiber configuration (connection proxy w, section samples s).

    The connection is B_ref + i * d(w); pairs in this slice have co-exact
    connection differences, so the exact-gauge (pure gradient) part is
    already zero and only constant phases remain to minimize over.
    """

    w: np.ndarray
    s: np.ndarray


def _sobolev_multiplier_norm_sq(f, geom, k):
    ku = 2.0 * np.pi * np.fft.fftfreq(geom.n_u, d=geom.du)
    kv = 2.0 * np.pi * np.fft.fftfreq(geom.n_v, d=geom.dv)
    xi2 = ku[:, None] ** 2 + kv[None, :] ** 2
    fh = sfft.fft2(f, workers=fft_workers())
    weight = (1.0 + xi2) ** k
    scale = geom.cell_area / (geom.n_u * geom.n_v)  # Parseval: sum -> integral
    return float(np.sum(weight * np.abs(fh) ** 2) * scale)


def _section_h2_inner(a, b, basis):
    """Covariant H^2 pairing matching the (1+|xi|^2)^2 multiplier in the
    untwisted limit: <a,b> + 2<grad a, grad b> + <second derivs>."""
    geom = basis.geom

    def pair(x, y):
        return complex(integrate(np.conj(x) * y, geom))

    total = pair(a, b)
    dau, dav = basis.covariant_derivative(a)
    dbu, dbv = basis.covariant_derivative(b)
    total += 2.0 * (pair(dau, dbu) + pair(dav, dbv))
    dauu, dauv = basis.covariant_derivative(dau)
    davu, davv = basis.covariant_derivative(dav)
    dbuu, dbuv = basis.covariant_derivative(dbu)
    dbvu, dbvv = basis.covariant_derivative(dbv)
    total += (pair(dauu, dbuu) + pair(dauv, dbuv)
              + pair(davu, dbvu) + pair(davv, dbvv))
    return total


def fiber_distance(config_a: FiberConfig, config_b: FiberConfig,
                   basis: SectionBasis, k=2):
    """min over constant phases of the Sobolev-k distance between fiber
    configurations, after Coulomb slicing.

    The phase is scanned on a 720-point grid and refined by golden-section
    search.  Only k = 2 is used by the decay tests; the w-part uses the
    (1+|xi|^2)^k spectral multiplier and the section part its covariant
    analogue.
    """
    geom = basis.geom
    for cfg in (config_a, config_b):
        if cfg.w.shape != geom.shape or cfg.s.shape != geom.shape:
            raise GridMismatchError("fiber configurations must live on the basis torus")
    if k != 2:
        raise ValidationError("only the Sobolev-2 metric is implemented")

    w_term = _sobolev_multiplier_norm_sq(config_a.w - config_b.w, geom, k)
    naa = _section_h2_inner(config_a.s, config_a.s, basis).real
    nbb = _section_h2_inner(config_b.s, config_b.s, basis).real
    cross = _section_h2_inner(config_a.s, config_b.s, basis)

    def objective(theta):
        # || e^{i theta} s_a - s_b ||^2 = naa + nbb - 2 Re(e^{-i theta} cross)
        return naa + nbb - 2.0 * (np.exp(-1j * theta) * cross).real

    thetas = np.linspace(0.0, 2.0 * np.pi, 720, endpoint=False)
    vals = [objective(t) for t in thetas]
    i0 = int(np.argmin(vals))
    lo = thetas[i0] - 2.0 * np.pi / 720
    hi = thetas[i0] + 2.0 * np.pi / 720
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - gr * (b - a)
    c2 = a + gr * (b - a)
    for _ in range(60):
        if objective(c1) < objective(c2):
            b, c2 = c2, c1
            c1 = b - gr * (b - a)
        else:
            a, c1 = c1, c2
            c2 = a + gr * (b - a)
    best = min(objective(0.5 * (a + b)), min(vals))
    return float(np.sqrt(max(w_term + best, 0.0)))

"""Instability certification for pulse steady states of gradient
reaction-diffusion systems.

Pipeline: check the background state (essential spectrum), locate the
symmetry point of the profile, certify the forced intersection with the
Dirichlet plane at that point (the profile's derivative is a decaying
solution of the linearization and all its components vanish simultaneously
at the symmetry point), and emit the verdict.  One certified conjugate
point already bounds the number of unstable directions from below by its
multiplicity; the full count is cross-checked against the eigenvalue
oracle when requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConsistencyError, MaslovStabError
from .maslov import Crossing, morse_index_via_maslov, scan_conjugate_points
from .oracle import morse_whole_line
from .problem import Problem, PulseProblem, build_from_gradient_rd
from .propagation import OdeControls
from .symplectic import subspace_angle


def detect_symmetry_point(pp: PulseProblem, grid: Optional[np.ndarray] = None,
                          n_offsets: int = 200):
    """Abscissa about which the profile is (closest to) even-symmetric.

    Minimizes the worst mismatch max_t ||phi(x0 + t) - phi(x0 - t)|| over
    x0; for an even-symmetric profile translated by delta the minimizer is
    delta/2 off the original center, i.e. the translated symmetry point.
    Returns (x0, residual, slope_norm_at_x0)."""
    if grid is None:
        grid = np.linspace(pp.x_span[0], pp.x_span[1], 801)
    norms = np.array([np.linalg.norm(pp.pulse_value(x)) for x in grid])
    peak = float(grid[int(np.argmax(norms))])
    half = 0.45 * (grid[-1] - grid[0])
    offsets = np.linspace(0.0, half, n_offsets)

    def residual(x0: float) -> float:
        return max(float(np.linalg.norm(pp.pulse_value(x0 + t) - pp.pulse_value(x0 - t)))
                   for t in offsets)

    width = 5.0
    res = minimize_scalar(residual, bounds=(peak - width, peak + width),
                          method="bounded", options={"xatol": 1e-9})
    x0 = float(res.x)
    return x0, float(res.fun), float(np.linalg.norm(pp.pulse_slope(x0)))


def certify_conjugate_point(pp: PulseProblem, x0: float,
                            problem: Optional[Problem] = None,
                            controls: Optional[OdeControls] = None,
                            tol_slope: Optional[float] = None,
                            tol_s: float = 1e-6,
                            membership_tol: float = 1e-6) -> Crossing:
    """Certify that the symmetry point is a conjugate point of the
    linearization.

    Guards that the profile's derivative actually vanishes at x0, verifies
    that the kernel solution (phi_x, D phi_xx) stays inside the propagated
    decaying family (subspace-angle check along the trace), and extracts
    the crossing at x0 with its positive crossing form."""
    grid = np.linspace(pp.x_span[0], pp.x_span[1], 801)
    slope_sup = max(float(np.linalg.norm(pp.pulse_slope(x))) for x in grid)
    if tol_slope is None:
        tol_slope = 1e-6 * max(slope_sup, 1e-30)
    slope_at = float(np.linalg.norm(pp.pulse_slope(x0)))
    if slope_at > tol_slope:
        raise MaslovStabError(
            f"profile derivative does not vanish at x0={x0:g}: "
            f"||phi_x||={slope_at:.3e} > {tol_slope:.3e}", x0=x0)

    if problem is None:
        problem = build_from_gradient_rd(pp)
    L = x0 + 8.0
    scan = scan_conjugate_points(problem, L, controls=controls)

    # the derivative of the profile solves the linearized system and decays,
    # so its trajectory must lie inside the propagated family
    trace = scan.trace
    lo = trace.x_start + 1.0
    hi = min(L, x0 + 6.0)
    worst = 0.0
    for idx in range(0, len(trace.xs), max(len(trace.xs) // 40, 1)):
        x = float(trace.xs[idx])
        if not (lo <= x <= hi):
            continue
        v = pp.kernel_vector(x)
        nv = np.linalg.norm(v)
        if nv <= 1e-13:
            continue
        worst = max(worst, subspace_angle(v[:, None], trace.frames[idx]))
    if worst > membership_tol:
        raise ConsistencyError(
            "propagated family does not contain the profile-derivative "
            f"solution (max angle {worst:.3e}); propagation inconsistent",
            max_angle=worst)

    for c in scan.crossings:
        if abs(c.location - x0) <= tol_s:
            return c
    raise ConsistencyError(
        f"no conjugate point found at the symmetry point x0={x0:g} "
        f"(crossings at {[c.location for c in scan.crossings]})", x0=x0)


@dataclass(frozen=True)
class InstabilityVerdict:
    symmetric: bool
    x0: Optional[float]
    symmetry_residual: Optional[float]
    conjugate_point_at_x0: Optional[Crossing]
    morse_lower_bound: int
    full_morse: Optional[int]
    verdict: str                  # "unstable" | "inconclusive"
    checks: dict

    def to_dict(self) -> dict:
        return {
            "symmetric": self.symmetric,
            "x0": self.x0,
            "residual": self.symmetry_residual,
            "crossing": (None if self.conjugate_point_at_x0 is None
                         else self.conjugate_point_at_x0.to_dict()),
            "morse_lower_bound": self.morse_lower_bound,
            "full_morse": self.full_morse,
            "verdict": self.verdict,
            "checks": self.checks,
        }


def _background_check(pp: PulseProblem, k_max: float = 10.0):
    """min over k of min eig(k^2 D - hessF(0)); positive means the
    homogeneous background state is spectrally stable (D > 0 dominates for
    large k, so a finite scan suffices)."""
    hess0 = np.atleast_2d(np.asarray(pp.hessF(np.zeros(pp.n)), dtype=float))
    worst = math.inf
    for k in np.linspace(0.0, k_max, 41):
        worst = min(worst, float(np.linalg.eigvalsh(k * k * np.diag(pp.D) - hess0)[0]))
    return worst


def instability_verdict(pp: PulseProblem, full: bool = True,
                        tol_sym: Optional[float] = None,
                        controls: Optional[OdeControls] = None) -> InstabilityVerdict:
    """Decide spectral instability of the pulse.

    Order of business: background-state check (failure means instability
    through the essential spectrum, no counting needed), symmetry detection
    (failure means the certification route is unavailable: inconclusive),
    conjugate-point certification at the symmetry point, and optionally the
    stabilized full count cross-checked against the eigenvalue oracle."""
    checks: dict = {}
    background_min = _background_check(pp)
    checks["background_min_eig"] = background_min
    if background_min <= 0.0:
        checks["mechanism"] = "essential-spectrum"
        checks["note"] = ("background state unstable: the essential spectrum "
                          "of the linearization reaches the right half-plane")
        return InstabilityVerdict(symmetric=False, x0=None, symmetry_residual=None,
                                  conjugate_point_at_x0=None, morse_lower_bound=0,
                                  full_morse=None, verdict="unstable", checks=checks)

    grid = np.linspace(pp.x_span[0], pp.x_span[1], 801)
    phi_sup = max(float(np.linalg.norm(pp.pulse_value(x))) for x in grid)
    if tol_sym is None:
        tol_sym = 1e-6 * max(phi_sup, 1e-30)
    x0, residual, slope_at = detect_symmetry_point(pp, grid)
    checks["symmetry_residual"] = residual
    checks["symmetry_tol"] = tol_sym
    checks["slope_norm_at_x0"] = slope_at
    if residual > tol_sym:
        checks["mechanism"] = "none"
        checks["note"] = ("profile is not even-symmetric within tolerance; "
                          "the forced-intersection argument does not apply")
        return InstabilityVerdict(symmetric=False, x0=x0, symmetry_residual=residual,
                                  conjugate_point_at_x0=None, morse_lower_bound=0,
                                  full_morse=None, verdict="inconclusive", checks=checks)

    problem = build_from_gradient_rd(pp)
    crossing = certify_conjugate_point(pp, x0, problem=problem, controls=controls)
    checks["mechanism"] = "conjugate-point"
    lower = crossing.multiplicity

    full_morse = None
    if full:
        m_maslov, diag = morse_index_via_maslov(problem, controls=controls)
        m_oracle, _, _ = morse_whole_line(problem)
        checks["morse_maslov"] = m_maslov
        checks["morse_oracle"] = m_oracle
        checks["stabilized_at_L"] = diag["stabilized_at"]
        if m_maslov != m_oracle:
            raise ConsistencyError(
                f"count disagreement: {m_maslov} conjugate points vs "
                f"{m_oracle} negative eigenvalues", maslov=m_maslov, oracle=m_oracle)
        full_morse = m_maslov
        if lower > full_morse:
            raise ConsistencyError(
                f"lower bound {lower} exceeds the full count {full_morse}")

    return InstabilityVerdict(symmetric=True, x0=x0, symmetry_residual=residual,
                              conjugate_point_at_x0=crossing,
                              morse_lower_bound=lower, full_morse=full_morse,
                              verdict="unstable", checks=checks)

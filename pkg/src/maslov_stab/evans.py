"""Evans-function evaluation and negative-zero counting.

E(lambda) is the determinant of the 2n x 2n matrix whose columns are an
orthonormal frame of the solutions decaying at +inf (carried backward to the
matching abscissa) followed by one of the solutions decaying at -inf
(carried forward).  Zeros below the essential floor are eigenvalues of the
whole-line operator.  The problem is selfadjoint, so all relevant zeros are
real and counting sign changes on a real grid suffices; even-multiplicity
zeros, which leave no sign change, are caught through dips of the smallest
singular value of the same matrix.

Frames are continuously normalized along the lambda grid (initial frames
aligned by the closest orthogonal factor), so the sign of E is meaningful
between grid points; any fixed change of basis multiplies E by a constant
nonzero factor and moves no zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import MaslovStabError
from .maslov import DIP_CANDIDATE_LEVEL, _small_singular_space
from .problem import Problem, choose_lambda_inf
from .propagation import (OdeControls, propagate_batch, propagate_single,
                          truncation_point)
from .symplectic import LagrangianFrame

DEFAULT_EPSILON = 1e-6


def stable_subspace_from_plus_infinity(p: Problem, lam: float,
                                       x_max: Optional[float] = None,
                                       controls: Optional[OdeControls] = None,
                                       match_x: float = 0.0) -> LagrangianFrame:
    """Orthonormal Lagrangian frame of the solutions decaying at +inf,
    initialized from the asymptotic system at x_max and integrated backward
    to the matching abscissa."""
    if x_max is None:
        x_max = truncation_point(p, side="plus")[0]
    frame, _, _, _ = propagate_single(p, lam, float(x_max), float(match_x),
                                      controls=controls, side="plus")
    return frame


def _endpoints(p: Problem, x_min, x_max):
    if x_min is None:
        x_min = truncation_point(p, side="minus")[0]
    if x_max is None:
        x_max = truncation_point(p, side="plus")[0]
    return float(x_min), float(x_max)


def evans_value(p: Problem, lam: float, x_min: Optional[float] = None,
                x_max: Optional[float] = None,
                controls: Optional[OdeControls] = None,
                match_x: float = 0.0,
                refs: Optional[tuple] = None) -> float:
    """E(lambda) for a single spectral parameter.  ``refs`` fixes the
    initial gauges (stable, unstable) against reference frames so values at
    nearby lambda are sign-comparable."""
    x_min, x_max = _endpoints(p, x_min, x_max)
    ref_s, ref_u = refs if refs is not None else (None, None)
    f_s, _, _, _ = propagate_single(p, lam, x_max, match_x, controls=controls,
                                    side="plus", align_to=ref_s)
    f_u, _, _, _ = propagate_single(p, lam, x_min, match_x, controls=controls,
                                    side="minus", align_to=ref_u)
    return float(np.linalg.det(np.hstack([f_s.stacked(), f_u.stacked()])))


@dataclass(frozen=True)
class EvansZero:
    lam: float
    multiplicity: int
    location_error: float

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "multiplicity": self.multiplicity,
                "error": self.location_error}


@dataclass(frozen=True)
class EvansTrace:
    problem: Problem
    lambda_inf: float
    epsilon: float
    match_x: float
    lambdas: np.ndarray
    values: np.ndarray
    sigma_min_intersection: np.ndarray
    zeros: tuple                 # EvansZero on [-lambda_inf, -epsilon]
    boundary_flag: Optional[dict]  # detection inside (-epsilon, 0]
    normalization: str

    @property
    def count(self) -> int:
        return sum(z.multiplicity for z in self.zeros)


def evans_trace(p: Problem, lambda_inf: Optional[float] = None,
                epsilon: Optional[float] = None,
                n_grid: int = 200,
                x_min: Optional[float] = None,
                x_max: Optional[float] = None,
                controls: Optional[OdeControls] = None,
                match_x: float = 0.0,
                gauge_seed: Optional[int] = None) -> EvansTrace:
    """Evaluate E on a lambda grid, bracket and refine its zeros on
    [-lambda_inf, -epsilon], and flag (without counting) detections in the
    translational-kernel zone (-epsilon, 0].

    ``gauge_seed`` right-multiplies the first initial frames by fixed random
    orthogonal matrices: a continuous change of basis that rescales E by a
    constant and must not move any zero (covariance hook for tests)."""
    controls = controls or OdeControls()
    if lambda_inf is None:
        lambda_inf = choose_lambda_inf(p)
    if epsilon is None:
        epsilon = DEFAULT_EPSILON * max(1.0, lambda_inf)
    x_min, x_max = _endpoints(p, x_min, x_max)

    lams = np.linspace(-lambda_inf, 0.0, n_grid)
    batch_u = propagate_batch(p, lams, x_min, match_x, controls=controls, side="minus")
    batch_s = propagate_batch(p, lams, x_max, match_x, controls=controls, side="plus")
    init_u = batch_u.init_frames
    init_s = batch_s.init_frames
    frames_u = batch_u.frames
    frames_s = batch_s.frames

    if gauge_seed is not None:
        rng = np.random.default_rng(gauge_seed)
        n = p.n
        qs = np.linalg.qr(rng.standard_normal((n, n)))[0]
        qu = np.linalg.qr(rng.standard_normal((n, n)))[0]
        frames_s = frames_s @ qs
        frames_u = frames_u @ qu
        init_s = init_s @ qs
        init_u = init_u @ qu

    matched = np.concatenate([frames_s, frames_u], axis=2)
    values = np.linalg.det(matched)
    sig = np.linalg.svd(matched, compute_uv=False)[:, -1]

    def pair_at(lam: float, ref_s, ref_u):
        f_s, _, _, _ = propagate_single(p, lam, x_max, match_x, controls=controls,
                                        side="plus", align_to=ref_s)
        f_u, _, _, _ = propagate_single(p, lam, x_min, match_x, controls=controls,
                                        side="minus", align_to=ref_u)
        m = np.hstack([f_s.stacked(), f_u.stacked()])
        return m

    def e_at(lam: float, ref_s, ref_u) -> float:
        return float(np.linalg.det(pair_at(lam, ref_s, ref_u)))

    lam_tol = 1e-10
    zeros = []
    boundary = None
    sgn = np.sign(values)

    for i in np.where((sgn[:-1] * sgn[1:]) < 0)[0]:
        lo, hi = lams[i], lams[i + 1]
        rs, ru = init_s[i], init_u[i]
        if hi > -epsilon:
            e_eps = e_at(-epsilon, rs, ru)
            if lo < -epsilon and np.sign(e_eps) != sgn[i] and e_eps != 0.0:
                hi = -epsilon
            else:
                boundary = {"lambda_bracket": [float(lo), float(hi)],
                            "reason": "sign change inside the kernel zone"}
                continue
        root = brentq(lambda t: e_at(t, rs, ru), lo, hi, xtol=lam_tol, rtol=1e-14)
        zeros.append((float(root), lam_tol, i))

    if p.n >= 2:
        interior = np.where((sig[1:-1] < sig[:-2]) & (sig[1:-1] <= sig[2:])
                            & (sig[1:-1] < DIP_CANDIDATE_LEVEL))[0] + 1
        for i in interior:
            if lams[i] > -epsilon:
                continue
            rs, ru = init_s[i], init_u[i]
            res = minimize_scalar(
                lambda t: float(np.linalg.svd(pair_at(t, rs, ru), compute_uv=False)[-1]),
                bounds=(lams[i - 1], lams[i + 1]), method="bounded",
                options={"xatol": 1e-7, "maxiter": 40})
            if res.fun <= 1e-5 and res.x <= -epsilon:
                near = min((abs(res.x - z[0]) for z in zeros), default=math.inf)
                if near > 1e-6 * max(1.0, lambda_inf):
                    zeros.append((float(res.x), 1e-7, i))

    zeros.sort()
    out = []
    for lam0, err, i in zeros:
        m = pair_at(lam0, init_s[i], init_u[i])
        k, _ = _small_singular_space(m, 1e-8)
        if k == 0:
            raise MaslovStabError(
                f"refined Evans zero at lambda={lam0:g} lost its intersection",
                lam=lam0)
        out.append(EvansZero(lam=lam0, multiplicity=k, location_error=err))

    if boundary is None:
        zone = lams >= -epsilon
        if np.any(sig[zone] <= 1e-6):
            boundary = {"reason": "frames nearly intersect inside the zone",
                        "sigma_min": float(sig[zone].min()),
                        "E_at_zero": float(values[-1])}

    return EvansTrace(problem=p, lambda_inf=float(lambda_inf),
                      epsilon=float(epsilon), match_x=float(match_x),
                      lambdas=lams, values=values, sigma_min_intersection=sig,
                      zeros=tuple(out), boundary_flag=boundary,
                      normalization="initial frames aligned along the grid by "
                                    "closest orthogonal factors; zeros invariant "
                                    "under any fixed basis change")


def count_negative_evans_zeros(p: Problem, lambda_inf: Optional[float] = None,
                               **kwargs):
    """Number of Evans-function zeros in [-lambda_inf, -epsilon], with
    multiplicity; returns (count, EvansTrace).  The excluded zone around
    zero holds the translational kernel of pulse problems, which is not an
    instability."""
    trace = evans_trace(p, lambda_inf=lambda_inf, **kwargs)
    return trace.count, trace


def export_evans_csv(trace: EvansTrace, path) -> None:
    """Plot-data emission: columns lambda, E_value, sigma_min_intersection."""
    from .propagation import write_csv_atomic

    rows = np.column_stack([trace.lambdas, trace.values,
                            trace.sigma_min_intersection])
    write_csv_atomic(path, rows, "lambda,E_value,sigma_min_intersection")

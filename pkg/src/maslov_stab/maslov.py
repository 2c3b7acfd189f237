"""Conjugate points and index bookkeeping along the spectral rectangle.

The boundary of [-lambda_inf, 0] x [-inf, L] is walked in four edges:

  A1  bottom   lambda-scan of the asymptotic frame (no crossings expected),
  A2  right    conjugate points: zeros of det X(s) at lambda = 0,
  A3  top      eigenvalues of the operator truncated at L, located through
               the matched determinant of the decaying family against the
               backward-carried Dirichlet plane,
  A4  left     s-scan at lambda = -lambda_inf (no crossings once
               lambda_inf exceeds the potential sup-norm).

Crossing forms are positive definite along both sweep directions, so every
crossing contributes its full intersection multiplicity with a fixed sign
and the edge indices are plain multiplicity counts.  The closed rectangle
must satisfy A1 + A2 + A3 + A4 = 0.

Kernel caveat: when 0 is (numerically) an eigenvalue of the whole-line
operator, the decaying-family propagation at lambda = 0 is a saddle
connection.  Far beyond the potential's support the computed frame
direction is decided by roundoff and can synthesize spurious Dirichlet
intersections.  Candidates are therefore validated against a second trace
at lambda = -delta (delta tiny), whose crossing count exactly equals the
number of eigenvalues <= -delta and which has no saddle connection;
candidates without a twin there are reported as kernel-tail artifacts and
excluded from the counts, mirroring the kernel-ambiguous convention of the
eigenvalue oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import ConsistencyError, CrossingFormError, MaslovStabError
from .oracle import eigenvalues_HL
from .problem import Problem, choose_lambda_inf
from .propagation import (OdeControls, PropagationTrace,
                          propagate_batch, propagate_dirichlet_batch,
                          propagate_frame, propagate_single,
                          truncation_point, unstable_subspace_at_minus_infinity)
from .symplectic import dirichlet_intersection

DEFAULT_TOL_S = 1e-8
DEFAULT_TOL_RANK = 1e-8
DEFAULT_DELTA_KERNEL = 1e-7
DEFAULT_ENDPOINT_TOL = 1e-6
DIP_CANDIDATE_LEVEL = 0.5


@dataclass(frozen=True)
class Crossing:
    """A located intersection with the Dirichlet plane."""

    location: float
    axis: str                    # "s" or "lambda"
    multiplicity: int
    form_eigenvalues: tuple
    signature: int
    location_error: float

    def to_dict(self) -> dict:
        key = "s" if self.axis == "s" else "lambda"
        return {key: self.location, "multiplicity": self.multiplicity,
                "form_eigenvalues": list(self.form_eigenvalues),
                "signature": self.signature, "error": self.location_error}


def crossing_form_s(trace: PropagationTrace, s_star: float,
                    kernel_basis: np.ndarray) -> np.ndarray:
    """Crossing form along s: the D^-1 Gram matrix of the bottom block on
    the kernel directions, Q[c, c'] = <D^-1 Y c, Y c'>.  Positive definite
    at every genuine crossing; anything else means the integration (or a
    hypothesis) broke down."""
    frame = trace.frame_at(s_star)
    yk = frame.Y @ kernel_basis
    q = yk.T @ (yk / trace.problem.D[:, None])
    q = 0.5 * (q + q.T)
    eigs = np.linalg.eigvalsh(q)
    if eigs[0] <= 0.0:
        raise CrossingFormError(
            f"monotonicity violated: crossing form at s={s_star:g} has "
            f"eigenvalue {eigs[0]:.3e} <= 0", location=s_star)
    return q


def _small_singular_space(mat: np.ndarray, tol: float, loose: float = 1e-4,
                          gap: float = 1e3):
    """Right singular vectors for the near-zero singular values of mat.

    Strict thresholding at ``tol`` first; if refinement resolution left the
    near-zero values slightly above it, accept them when they are separated
    from the rest by a clear multiplicative gap and still small on the
    matrix scale.  Returns (count, basis)."""
    _, svals, vt = np.linalg.svd(mat)
    n = len(svals)
    k = int(np.count_nonzero(svals <= tol))
    if k == 0 and n >= 2 and svals[-1] <= loose:
        drops = svals[:-1] / np.maximum(svals[1:], 1e-300)
        j = int(np.argmax(drops))
        if drops[j] >= gap and np.all(svals[j + 1:] <= loose):
            k = n - (j + 1)
    basis = vt[n - k:].T if k else np.zeros((mat.shape[1], 0))
    return k, basis


def matching_point(p: Problem, x_min: float, L: float) -> float:
    """Interior matching abscissa for eigenvalue detection: where the
    potential deviates most from its limits (the center of the pulse /
    well), clipped into the working interval.  Matching the two propagated
    families there keeps their intersection well conditioned; at the
    Dirichlet end itself the decaying component has shrunk below resolution
    for moderate domain lengths."""
    grid = p.grid(801)
    mid = 0.5 * (p.V_minus + p.V_plus)
    devs = np.array([np.linalg.norm(p.potential(x) - mid, 2) for x in grid])
    if devs.max() <= 1e-13 * (1.0 + np.linalg.norm(mid, 2)):
        x_peak = 0.5 * (x_min + L)
    else:
        x_peak = float(grid[int(np.argmax(devs))])
    pad = 0.05 * (L - x_min)
    return float(min(max(x_peak, x_min + pad), L - pad))


@dataclass(frozen=True)
class LambdaCrossingData:
    lam: float
    x_mid: float
    multiplicity: int
    form: np.ndarray
    vectors_at_mid: np.ndarray    # 2n x k values of the kernel solutions at x_mid


def lambda_crossing_data(p: Problem, lam0: float, s: float,
                         x_min: Optional[float] = None,
                         x_mid: Optional[float] = None,
                         controls: Optional[OdeControls] = None,
                         tol_rank: float = DEFAULT_TOL_RANK,
                         ref_init: Optional[np.ndarray] = None) -> LambdaCrossingData:
    """Multiplicity and crossing form of a lambda crossing at (lam0, s).

    The decaying family is carried forward to the matching point and the
    Dirichlet plane backward from s; the kernel solutions are read off the
    intersection of the two frames, and the form  Q[c, c'] = integral of
    <p1_c, p1_c'> dx over (-inf, s] is assembled from the Gram accumulators
    of both propagations."""
    if x_min is None:
        x_min = truncation_point(p)[0]
    if x_mid is None:
        x_mid = matching_point(p, x_min, s)
    frame_u, _, _, gram_u = propagate_single(p, lam0, x_min, x_mid,
                                             controls=controls, with_gram=True,
                                             align_to=ref_init)
    fd, gd = propagate_dirichlet_batch(p, [lam0], s, x_mid,
                                       controls=controls, with_gram=True)
    fu = frame_u.stacked()
    m = np.hstack([fu, -fd[0]])
    k, null = _small_singular_space(m, tol_rank)
    if k == 0:
        raise MaslovStabError(
            f"(lambda={lam0:g}, s={s:g}) is not a crossing: matched frames "
            "have no numerical intersection")
    n = p.n
    cu, cd = null[:n], null[n:]
    # the backward accumulator carries the signed integral from s to x_mid
    q = cu.T @ gram_u @ cu - cd.T @ gd[0] @ cd
    q = 0.5 * (q + q.T)
    eigs = np.linalg.eigvalsh(q)
    if eigs[0] <= 0.0:
        raise CrossingFormError(
            f"monotonicity violated: lambda crossing form at lambda={lam0:g} "
            f"has eigenvalue {eigs[0]:.3e} <= 0", location=lam0)
    return LambdaCrossingData(lam=float(lam0), x_mid=float(x_mid),
                              multiplicity=k, form=q, vectors_at_mid=fu @ cu)


def crossing_form_lambda(p: Problem, lam0: float, s: float,
                         kernel_basis: Optional[np.ndarray] = None,
                         x_min: Optional[float] = None,
                         controls: Optional[OdeControls] = None,
                         tol_rank: float = DEFAULT_TOL_RANK) -> np.ndarray:
    """Crossing form along lambda at (lam0, s).

    With ``kernel_basis`` given (coordinates in the frame propagated to s),
    the form is the restricted Gram accumulator of that single propagation;
    this direct route is only resolvable while the decaying component
    survives at s.  By default the matched-frame construction of
    lambda_crossing_data is used instead."""
    if kernel_basis is not None:
        if x_min is None:
            x_min = truncation_point(p)[0]
        frame, _, _, gram = propagate_single(p, lam0, x_min, s,
                                             controls=controls, with_gram=True)
        q = kernel_basis.T @ gram @ kernel_basis
        q = 0.5 * (q + q.T)
        eigs = np.linalg.eigvalsh(q)
        if eigs[0] <= 0.0:
            raise CrossingFormError(
                f"monotonicity violated: lambda crossing form at "
                f"lambda={lam0:g} has eigenvalue {eigs[0]:.3e} <= 0",
                location=lam0)
        return q
    return lambda_crossing_data(p, lam0, s, x_min=x_min,
                                controls=controls, tol_rank=tol_rank).form


# ---------------------------------------------------------------------------
# conjugate points (the lambda = 0 edge)


def _detect_candidates(trace: PropagationTrace, tol_rank: float, xtol: float,
                       merge_window: float,
                       dip_level: float = DIP_CANDIDATE_LEVEL):
    """Candidate crossing locations from a recorded trace: bracketed sign
    changes of det X refined by root finding, plus (for n >= 2) local minima
    of sigma_min refined by scalar minimization to catch even-multiplicity
    intersections that do not flip the determinant sign.  Detections closer
    than merge_window are the same crossing seen by both detectors."""
    out = []
    det = trace.detX
    xs = trace.xs
    sgn = np.sign(det)
    for i in np.where((sgn[:-1] * sgn[1:]) < 0)[0]:
        root = brentq(trace.det_top_at, xs[i], xs[i + 1], xtol=xtol, rtol=1e-15)
        out.append((float(root), xtol, "sign"))
    for i in np.where(sgn == 0)[0]:        # exact zero on a sample
        out.append((float(xs[i]), 0.0, "sign"))

    if trace.n >= 2:
        sig = trace.sigma_min
        interior = np.where((sig[1:-1] < sig[:-2]) & (sig[1:-1] <= sig[2:])
                            & (sig[1:-1] < dip_level))[0] + 1
        for i in interior:
            res = minimize_scalar(trace.sigma_min_at,
                                  bounds=(xs[i - 1], xs[i + 1]),
                                  method="bounded",
                                  options={"xatol": max(xtol * 1e-2, 1e-13)})
            if res.fun <= tol_rank:
                out.append((float(res.x), xtol, "dip"))

    out.sort()
    merged = []
    for loc, err, kind in out:
        if merged and abs(loc - merged[-1][0]) <= merge_window:
            if kind == "sign" and merged[-1][2] == "dip":
                merged[-1] = (loc, err, kind)
            continue
        merged.append((loc, err, kind))
    return merged


@dataclass(frozen=True)
class ConjugatePointScan:
    problem: Problem
    L: float
    x_min: float
    delta: float
    crossings: tuple               # counted Crossing objects, ascending in s
    endpoint_crossing: Optional[Crossing]
    tail_artifacts: tuple          # dicts for flagged, excluded detections
    trace: PropagationTrace

    @property
    def total_multiplicity(self) -> int:
        return sum(c.multiplicity for c in self.crossings)


def scan_conjugate_points(p: Problem, L: float, x_min: Optional[float] = None,
                          controls: Optional[OdeControls] = None,
                          tol_s: float = DEFAULT_TOL_S,
                          tol_rank: float = DEFAULT_TOL_RANK,
                          delta_kernel: float = DEFAULT_DELTA_KERNEL,
                          endpoint_tol: float = DEFAULT_ENDPOINT_TOL,
                          twin_window: float = 0.35) -> ConjugatePointScan:
    """Locate, refine, validate and classify the zeros of det X(s) at
    lambda = 0 on [x_min, L]."""
    controls = controls or OdeControls()
    if x_min is None:
        x_min = truncation_point(p)[0]
    trace = propagate_frame(p, 0.0, x_min, float(L), controls=controls)
    xtol = max(tol_s * 1e-4, 1e-13)
    candidates = _detect_candidates(trace, tol_rank, xtol,
                                    merge_window=10.0 * tol_s)

    artifacts = []
    kept = []
    if candidates:
        shadow = propagate_frame(p, -abs(delta_kernel), x_min, float(L), controls=controls)
        shadow_locs = [loc for loc, _, _ in
                       _detect_candidates(shadow, tol_rank, max(tol_s, 1e-9),
                                          merge_window=10.0 * tol_s)]
        for loc, err, kind in candidates:
            near = min((abs(loc - t) for t in shadow_locs), default=math.inf)
            if near <= twin_window:
                kept.append((loc, err, kind))
            else:
                artifacts.append({"s": loc, "kind": kind,
                                  "reason": "no twin at lambda=-delta (kernel tail artifact)"})
        unmatched = [t for t in shadow_locs
                     if min((abs(t - loc) for loc, _, _ in kept), default=math.inf) > twin_window]
        if unmatched:
            raise ConsistencyError(
                "validation trace has crossings with no counterpart at lambda=0 "
                f"near s={unmatched}; integration unreliable", unmatched=unmatched)

    crossings = []
    endpoint = None
    for loc, err, kind in kept:
        frame = trace.frame_at(loc)
        dim, kernel = dirichlet_intersection(frame, tol_rank)
        if dim == 0:
            raise ConsistencyError(
                f"refined crossing at s={loc:g} lost its kernel (sigma_min="
                f"{frame.sigma_min_top:.3e}); tolerances inconsistent", s=loc)
        q = crossing_form_s(trace, loc, kernel)
        eigs = tuple(float(v) for v in np.linalg.eigvalsh(q))
        c = Crossing(location=float(loc), axis="s", multiplicity=dim,
                     form_eigenvalues=eigs, signature=dim,
                     location_error=float(max(err, 1e-14)))
        if abs(loc - L) <= endpoint_tol:
            endpoint = c
        else:
            crossings.append(c)

    for a, b in zip(crossings, crossings[1:]):
        if abs(b.location - a.location) <= 10.0 * tol_s:
            raise ConsistencyError(
                f"crossings at s={a.location:g} and s={b.location:g} are not "
                "isolated at the working tolerance")

    return ConjugatePointScan(problem=p, L=float(L), x_min=float(x_min),
                              delta=abs(delta_kernel), crossings=tuple(crossings),
                              endpoint_crossing=endpoint,
                              tail_artifacts=tuple(artifacts), trace=trace)


def find_conjugate_points(p: Problem, L: float, **kwargs) -> list:
    """Counted conjugate points in (-inf, L) as a list of Crossing objects
    (endpoint and kernel-tail detections are excluded; use
    scan_conjugate_points for the full breakdown)."""
    return list(scan_conjugate_points(p, L, **kwargs).crossings)


# ---------------------------------------------------------------------------
# the lambda sweep at fixed s = L (top edge)


@dataclass(frozen=True)
class LambdaSweepScan:
    problem: Problem
    L: float
    lambda_inf: float
    eps_kernel: float
    x_mid: float
    crossings: tuple               # counted Crossing objects on [-lambda_inf, -eps]
    kernel_zone_flag: Optional[dict]   # detection inside (-eps, 0]
    grid: np.ndarray
    matched_det: np.ndarray        # det [decaying family | Dirichlet plane] at x_mid
    sigma_min_intersection: np.ndarray

    @property
    def total_multiplicity(self) -> int:
        return sum(c.multiplicity for c in self.crossings)


def lambda_sweep(p: Problem, L: float, lambda_inf: float,
                 x_min: Optional[float] = None,
                 n_grid: int = 200,
                 eps_kernel: float = DEFAULT_DELTA_KERNEL,
                 controls: Optional[OdeControls] = None,
                 tol_rank: float = DEFAULT_TOL_RANK) -> LambdaSweepScan:
    """Locate the spectrum of the truncated operator on [-lambda_inf,
    -eps_kernel] as zeros of the matched determinant

        E_L(lambda) = det [ F_decaying(x_mid) | F_Dirichlet(x_mid) ],

    with the decaying family carried forward from x_min and the Dirichlet
    plane carried backward from L.  Sign changes are bracketed and refined;
    for systems, local minima of the smallest singular value catch
    even-multiplicity eigenvalues that leave no sign change.  Detections
    inside the kernel zone (-eps_kernel, 0] are flagged, not counted."""
    controls = controls or OdeControls()
    if x_min is None:
        x_min = truncation_point(p)[0]
    x_mid = matching_point(p, x_min, L)
    lams = np.linspace(-lambda_inf, 0.0, n_grid)
    batch_u = propagate_batch(p, lams, x_min, x_mid, controls=controls)
    frames_d, _ = propagate_dirichlet_batch(p, lams, float(L), x_mid, controls=controls)
    matched = np.concatenate([batch_u.frames, -frames_d], axis=2)
    det = np.linalg.det(matched)
    sig = np.linalg.svd(matched, compute_uv=False)[:, -1]

    def matched_at(lam: float, ref: np.ndarray):
        frame_u = propagate_single(p, lam, x_min, x_mid, controls=controls,
                                   align_to=ref)[0]
        fd, _ = propagate_dirichlet_batch(p, [lam], float(L), x_mid, controls=controls)
        m = np.hstack([frame_u.stacked(), -fd[0]])
        return float(np.linalg.det(m)), float(np.linalg.svd(m, compute_uv=False)[-1])

    def e_val(lam: float, ref: np.ndarray) -> float:
        return matched_at(lam, ref)[0]

    lam_tol = 1e-10
    candidates = []
    kernel_flag = None
    sgn = np.sign(det)

    for i in np.where((sgn[:-1] * sgn[1:]) < 0)[0]:
        lo, hi = lams[i], lams[i + 1]
        ref = batch_u.init_frames[i]
        if hi > -eps_kernel:
            # bracket straddles the kernel zone: re-bracket against -eps
            g_eps = e_val(-eps_kernel, ref)
            if lo < -eps_kernel and np.sign(g_eps) != sgn[i] and g_eps != 0.0:
                hi = -eps_kernel
            else:
                kernel_flag = {"lambda_bracket": [float(lo), float(hi)],
                               "reason": "sign change inside the kernel zone"}
                continue
        root = brentq(lambda t: e_val(t, ref), lo, hi, xtol=lam_tol, rtol=1e-14)
        candidates.append((float(root), lam_tol, i))

    if p.n >= 2:
        interior = np.where((sig[1:-1] < sig[:-2]) & (sig[1:-1] <= sig[2:])
                            & (sig[1:-1] < DIP_CANDIDATE_LEVEL))[0] + 1
        for i in interior:
            if lams[i] > -eps_kernel:
                continue
            ref = batch_u.init_frames[i]
            res = minimize_scalar(lambda t: matched_at(t, ref)[1],
                                  bounds=(lams[i - 1], lams[i + 1]),
                                  method="bounded",
                                  options={"xatol": 1e-8, "maxiter": 40})
            if res.fun <= max(tol_rank, 1e-5) and res.x <= -eps_kernel:
                near = min((abs(res.x - c[0]) for c in candidates), default=math.inf)
                if near > 1e-6 * max(1.0, lambda_inf):
                    candidates.append((float(res.x), 1e-8, i))

    candidates.sort()
    out = []
    for lam0, err, i in candidates:
        data = lambda_crossing_data(p, lam0, float(L), x_min=x_min, x_mid=x_mid,
                                    controls=controls, tol_rank=tol_rank,
                                    ref_init=batch_u.init_frames[i])
        eigs = tuple(float(v) for v in np.linalg.eigvalsh(data.form))
        out.append(Crossing(location=lam0, axis="lambda",
                            multiplicity=data.multiplicity,
                            form_eigenvalues=eigs, signature=data.multiplicity,
                            location_error=err))

    if kernel_flag is None:
        zone = lams >= -eps_kernel
        if np.any(sig[zone] <= 1e-6):
            kernel_flag = {"reason": "matched frames nearly intersect inside the zone",
                           "sigma_min": float(sig[zone].min())}

    return LambdaSweepScan(problem=p, L=float(L), lambda_inf=float(lambda_inf),
                           eps_kernel=float(eps_kernel), x_mid=x_mid,
                           crossings=tuple(out), kernel_zone_flag=kernel_flag,
                           grid=lams, matched_det=det,
                           sigma_min_intersection=sig)


# ---------------------------------------------------------------------------
# the closed rectangle


@dataclass(frozen=True)
class MaslovReport:
    A1: int
    A2: int
    A3: int
    A4: int
    conjugate_points: tuple
    lambda_crossings: tuple
    morse_from_maslov: int
    endpoint_crossing_at_L: Optional[Crossing]
    lambda_inf: float
    L: float
    x_min: float
    checks: dict
    # raw scan data for trace exports; not part of the JSON document
    conjugate_scan: Optional["ConjugatePointScan"] = None
    sweep_scan: Optional["LambdaSweepScan"] = None

    def to_dict(self) -> dict:
        return {
            "A1": self.A1, "A2": self.A2, "A3": self.A3, "A4": self.A4,
            "conjugate_points": [c.to_dict() for c in self.conjugate_points],
            "lambda_crossings": [c.to_dict() for c in self.lambda_crossings],
            "morse": self.morse_from_maslov,
            "endpoint_crossing_at_L": (None if self.endpoint_crossing_at_L is None
                                       else self.endpoint_crossing_at_L.to_dict()),
            "lambda_inf": self.lambda_inf, "L": self.L, "x_min": self.x_min,
            "checks": self.checks,
        }


def _scan_bottom_edge(p: Problem, lambda_inf: float, n_grid: int = 50,
                      threshold: float = 1e-6) -> float:
    """Smallest sigma_min of the asymptotic frame's top block over the
    lambda range; the asymptotic family never meets the Dirichlet plane, so
    this must stay bounded away from zero."""
    worst = math.inf
    for lam in np.linspace(-lambda_inf, 0.0, n_grid):
        f = unstable_subspace_at_minus_infinity(p, lam)
        worst = min(worst, f.sigma_min_top)
    if worst <= threshold:
        raise ConsistencyError(
            f"asymptotic frame nearly meets the Dirichlet plane "
            f"(sigma_min={worst:.3e}); bottom edge scan failed", sigma_min=worst)
    return worst


def _scan_left_edge(p: Problem, lambda_inf: float, x_min: float, L: float,
                    controls: OdeControls, threshold: float = 1e-6) -> float:
    """No sign changes or kernels may occur along s at lambda = -lambda_inf."""
    tr = propagate_frame(p, -lambda_inf, x_min, L, controls=controls)
    sgn = np.sign(tr.detX)
    if np.any(sgn[:-1] * sgn[1:] < 0) or tr.sigma_min.min() <= threshold:
        raise ConsistencyError(
            "left edge scan found a crossing at lambda=-lambda_inf "
            f"(min sigma_min={tr.sigma_min.min():.3e}); lambda_inf too small?",
            lambda_inf=lambda_inf)
    return float(tr.sigma_min.min())


def maslov_rectangle(p: Problem, L: float, lambda_inf: Optional[float] = None,
                     x_min: Optional[float] = None,
                     controls: Optional[OdeControls] = None,
                     n_grid: int = 200,
                     oracle_check: bool = True,
                     oracle_h: float = 0.02,
                     tol_s: float = DEFAULT_TOL_S,
                     tol_rank: float = DEFAULT_TOL_RANK) -> MaslovReport:
    """Walk the full rectangle boundary, assemble the four edge indices,
    verify the closed-loop identity and (optionally) the independent
    eigenvalue count of the truncated operator."""
    controls = controls or OdeControls()
    if lambda_inf is None:
        lambda_inf = choose_lambda_inf(p)
    if x_min is None:
        x_min = truncation_point(p)[0]

    edge_bottom = _scan_bottom_edge(p, lambda_inf)
    edge_left = _scan_left_edge(p, lambda_inf, x_min, L, controls)
    a1 = 0
    a4 = 0

    scan = scan_conjugate_points(p, L, x_min=x_min, controls=controls,
                                 tol_s=tol_s, tol_rank=tol_rank)
    a2 = scan.total_multiplicity

    sweep = lambda_sweep(p, L, lambda_inf, x_min=x_min, n_grid=n_grid,
                         controls=controls, tol_rank=tol_rank)
    a3 = -sweep.total_multiplicity

    checks = {
        "identity_sum": a1 + a2 + a3 + a4,
        "identity_ok": (a1 + a2 + a3 + a4) == 0,
        "bottom_edge_min_sigma": edge_bottom,
        "left_edge_min_sigma": edge_left,
        "a2_equals_abs_a3": a2 == -a3,
        "kernel_zone_flag": sweep.kernel_zone_flag,
        "tail_artifacts": list(scan.tail_artifacts),
        "endpoint_convention": "a crossing at s = L within tolerance is "
                               "flagged and excluded from both A2 and |A3| "
                               "(its net contribution to the closed loop is zero)",
    }

    if oracle_check:
        rep = eigenvalues_HL(p, L, h=oracle_h)
        unambiguous = rep.nonpositive_count - len(rep.kernel_ambiguous)
        checks["oracle_nonpositive_unambiguous"] = unambiguous
        checks["oracle_kernel_ambiguous"] = list(rep.kernel_ambiguous)
        checks["sweep_matches_oracle"] = unambiguous == -a3
        if not checks["sweep_matches_oracle"]:
            raise ConsistencyError(
                f"lambda sweep found {-a3} nonpositive eigenvalues but the "
                f"discretization oracle counted {unambiguous}",
                sweep=-a3, oracle=unambiguous, report=rep.to_dict())

    if not checks["identity_ok"]:
        raise ConsistencyError(
            f"rectangle identity violated: A=({a1},{a2},{a3},{a4})",
            A=(a1, a2, a3, a4), checks=checks)

    return MaslovReport(A1=a1, A2=a2, A3=a3, A4=a4,
                        conjugate_points=scan.crossings,
                        lambda_crossings=sweep.crossings,
                        morse_from_maslov=a2,
                        endpoint_crossing_at_L=scan.endpoint_crossing,
                        lambda_inf=float(lambda_inf), L=float(L),
                        x_min=float(x_min), checks=checks,
                        conjugate_scan=scan, sweep_scan=sweep)


def morse_index_via_maslov(p: Problem, L_start: float = 10.0,
                           max_doublings: int = 5,
                           tol_s: float = DEFAULT_TOL_S,
                           controls: Optional[OdeControls] = None,
                           x_min: Optional[float] = None):
    """Stabilized conjugate-point count: double the right endpoint until the
    count and the locations freeze on two consecutive doublings.  Returns
    (morse, diagnostics) where diagnostics carries the per-L scans."""
    controls = controls or OdeControls()
    if x_min is None:
        x_min = truncation_point(p)[0]

    def locations(scan):
        return [c.location for c in scan.crossings]

    def matches(s0, s1):
        if s0.total_multiplicity != s1.total_multiplicity:
            return False
        l0, l1 = locations(s0), locations(s1)
        if len(l0) != len(l1):
            return False
        return all(abs(a - b) <= max(tol_s, 1e-9) * 10 for a, b in zip(l0, l1))

    L = float(L_start)
    scans = [scan_conjugate_points(p, L, x_min=x_min, controls=controls, tol_s=tol_s)]
    Ls = [L]
    stable_pairs = 0
    for _ in range(max_doublings):
        L = 2.0 * L
        scans.append(scan_conjugate_points(p, L, x_min=x_min, controls=controls, tol_s=tol_s))
        Ls.append(L)
        if matches(scans[-2], scans[-1]):
            stable_pairs += 1
            if stable_pairs >= 2:
                final = scans[-1]
                return final.total_multiplicity, {
                    "L_values": Ls,
                    "counts": [s.total_multiplicity for s in scans],
                    "scans": scans,
                    "final_scan": final,
                    "stabilized_at": Ls[-3],
                }
        else:
            stable_pairs = 0
    from .errors import StabilizationError
    raise StabilizationError(
        f"conjugate-point count did not stabilize up to L={L:g} "
        f"(counts {[s.total_multiplicity for s in scans]}); enlarge the domain",
        counts=[s.total_multiplicity for s in scans], L_values=Ls)

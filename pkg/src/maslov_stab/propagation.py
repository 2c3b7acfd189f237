"""Propagation of the decaying-solution frame along x.

The first-order system F' = A(x, lam) F with A = [[0, D^-1], [V(x) - lam I, 0]]
is integrated with an embedded Dormand-Prince 5(4) pair.  After every
accepted step the 2n x n frame is re-orthonormalized by thin QR with a
positive-diagonal triangular factor: the span is unchanged and the sign of
det X survives renormalization, so sign changes along the trace mark true
intersections with the Dirichlet plane.  Without the renormalization the
fastest-growing column swallows the frame within a few units of x.

The integrator optionally accumulates the Gram matrix of the top block of
the underlying (un-renormalized) solutions,

    W = integral of  P1(x)^T P1(x) dx,

expressed in the coordinates of the current orthonormal frame.  Restricted
to the kernel of X at a crossing of the lambda sweep this is exactly the
crossing form along the spectral parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh

from .errors import IntegrationError, MaslovStabError
from .problem import Problem, fit_exponential_tail
from .symplectic import LagrangianFrame, positive_qr

# Dormand-Prince 5(4) tableau; the last stage row doubles as the 5th-order
# weights (first-same-as-last pair).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = (
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
)
_ERR = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                 -17253 / 339200, 22 / 525, -1 / 40])

_MIN_DET_FOR_SIGN = 1e-12


@dataclass(frozen=True)
class OdeControls:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = 0.25       # also bounds the trace sample spacing
    tol_lag: float = 1e-8        # frames must stay Lagrangian to 100x this
    check_signs: bool = True     # assert det-sign invariance at each renorm


@dataclass(frozen=True)
class AsymptoticSystem:
    """Constant-coefficient system at a spatial infinity."""

    D: np.ndarray
    V_limit: np.ndarray

    @property
    def n(self) -> int:
        return len(self.D)

    def matrix(self, lam: float) -> np.ndarray:
        n = self.n
        out = np.zeros((2 * n, 2 * n))
        out[:n, n:] = np.diag(1.0 / self.D)
        out[n:, :n] = self.V_limit - lam * np.eye(n)
        return out

    def eigenpairs(self, lam: float):
        """Decay rates nu_j > 0 and vectors U_j with (V - lam) U = nu^2 D U,
        normalized U^T D U = I.  The matrix eigenvector for +nu_j is
        (U_j, nu_j D U_j)."""
        mu, U = eigh(self.V_limit - lam * np.eye(self.n), np.diag(self.D))
        if mu[0] <= 0.0:
            raise MaslovStabError(
                f"asymptotic system not hyperbolic at lambda={lam:g}: "
                f"generalized eigenvalue {mu[0]:.3e} <= 0 (hypothesis violation upstream)",
                lam=lam, mu_min=float(mu[0]),
            )
        return np.sqrt(mu), U

    def frame_raw(self, lam: float, sign: float = 1.0) -> np.ndarray:
        """Stacked eigenvector columns (U_j, sign * nu_j D U_j); sign=+1 gives
        the growing family (decaying toward -inf), sign=-1 the decaying one."""
        nu, U = self.eigenpairs(lam)
        return np.vstack([U, sign * nu[None, :] * (self.D[:, None] * U)])


def _initial_state(system: AsymptoticSystem, lam: float, sign: float,
                   align_to: Optional[np.ndarray] = None):
    """Orthonormal frame for the selected asymptotic family plus the Gram
    seed for the tail integral of the top blocks over the un-truncated tail.

    ``align_to`` applies the orthogonal right-factor that best matches a
    reference frame; used to keep frames continuous along a lambda grid.
    """
    nu, U = system.eigenpairs(lam)
    raw = np.vstack([U, sign * nu[None, :] * (system.D[:, None] * U)])
    # tail of the Gram integral: columns decay like exp(nu_j * (x - x0))
    # toward the relevant infinity
    tail = (U.T @ U) / (nu[:, None] + nu[None, :])
    q, r = positive_qr(raw)
    rinv = np.linalg.inv(r)
    gram = rinv.T @ tail @ rinv
    if align_to is not None:
        m = q.T @ align_to
        uu, _, vv = np.linalg.svd(m)
        o = uu @ vv
        q = q @ o
        gram = o.T @ gram @ o
    return q, gram


def unstable_subspace_at_minus_infinity(p: Problem, lam: float) -> LagrangianFrame:
    """Orthonormal Lagrangian frame of the solutions decaying toward -inf,
    evaluated in the limit (the spectral unstable subspace of the left
    asymptotic matrix)."""
    system = AsymptoticSystem(p.D, p.V_minus)
    q, _ = _initial_state(system, lam, sign=+1.0)
    n = p.n
    return LagrangianFrame(q[:n], q[n:], x=-math.inf, lam=lam)


def stable_subspace_at_plus_infinity(p: Problem, lam: float) -> LagrangianFrame:
    system = AsymptoticSystem(p.D, p.V_plus)
    q, _ = _initial_state(system, lam, sign=-1.0)
    n = p.n
    return LagrangianFrame(q[:n], q[n:], x=math.inf, lam=lam)


# ---------------------------------------------------------------------------
# core integrator (batched over lambda)


class _RawResult:
    __slots__ = ("xs", "frames", "detX", "sigma_min", "lag_residual", "gram", "final")

    def __init__(self, xs, frames, detX, sigma_min, lag_residual, gram, final):
        self.xs = xs
        self.frames = frames
        self.detX = detX
        self.sigma_min = sigma_min
        self.lag_residual = lag_residual
        self.gram = gram
        self.final = final


def _rhs(x: float, F: np.ndarray, p: Problem, lams: np.ndarray, d_inv: np.ndarray) -> np.ndarray:
    n = p.n
    V = p.potential(x)
    X = F[:, :n, :]
    out = np.empty_like(F)
    out[:, :n, :] = d_inv[:, None] * F[:, n:, :]
    out[:, n:, :] = V @ X - lams[:, None, None] * X
    return out


def _frame_stats(F: np.ndarray, n: int):
    X = F[:, :n, :]
    Y = F[:, n:, :]
    detx = np.linalg.det(X)
    smin = np.linalg.svd(X, compute_uv=False)[:, -1]
    skew = np.transpose(X, (0, 2, 1)) @ Y - np.transpose(Y, (0, 2, 1)) @ X
    lag = np.linalg.norm(skew, axis=(1, 2))
    return detx, smin, lag


def _integrate(p: Problem, lams: np.ndarray, x0: float, x1: float,
               F0: np.ndarray, gram0: Optional[np.ndarray],
               controls: OdeControls, record: bool) -> _RawResult:
    """Adaptive integration of the frame batch from x0 to x1 (either
    direction), renormalizing at every accepted step."""
    n = p.n
    m = F0.shape[0]
    d_inv = 1.0 / p.D
    direction = 1.0 if x1 >= x0 else -1.0
    span = abs(x1 - x0)
    max_step = controls.max_step * min(1.0, float(p.D.min()))

    x = x0
    y = F0.copy()
    gram = None if gram0 is None else gram0.copy()
    k = np.empty((7,) + y.shape)
    k[0] = _rhs(x, y, p, lams, d_inv)

    if record:
        detx, smin, lag = _frame_stats(y, n)
        xs = [x]
        frames = [y.copy()]
        dets = [detx.copy()]
        smins = [smin.copy()]
        lags = [lag.copy()]

    if span == 0.0:
        final = y
        if not record:
            detx, smin, lag = _frame_stats(y, n)
            return _RawResult(None, None, detx, smin, lag, gram, final)
        return _RawResult(np.array(xs), np.array(frames), np.array(dets),
                          np.array(smins), np.array(lags), gram, final)

    h = direction * min(max_step, 1e-2, span)
    min_step = 1e-13 * max(1.0, span)

    while True:
        remaining = x1 - x
        if direction * remaining <= 1e-14 * max(1.0, abs(x1)):
            break
        if abs(h) > abs(remaining):
            h = remaining

        # stages
        for i, row in enumerate(_A, start=1):
            yi = y + h * np.tensordot(row, k[:i], axes=(0, 0))
            k[i] = _rhs(x + _C[i] * h, yi, p, lams, d_inv)
        y_new = yi            # stage-7 input equals the 5th-order solution
        err = h * np.tensordot(_ERR, k, axes=(0, 0))

        scale = controls.atol + controls.rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio2 = (err / scale) ** 2
        err_norm = math.sqrt(float(ratio2.reshape(m, -1).mean(axis=1).max()))

        if err_norm <= 1.0:
            # accept: Hermite midpoint for the Gram quadrature, then renorm
            if gram is not None:
                y_mid = 0.5 * (y + y_new) + (h / 8.0) * (k[0] - k[6])
                x0b, xmb, x1b = y[:, :n, :], y_mid[:, :n, :], y_new[:, :n, :]
                dS = (h / 6.0) * (
                    np.transpose(x0b, (0, 2, 1)) @ x0b
                    + 4.0 * np.transpose(xmb, (0, 2, 1)) @ xmb
                    + np.transpose(x1b, (0, 2, 1)) @ x1b
                )
                gram = gram + dS

            q, r = positive_qr(y_new)
            if controls.check_signs:
                det_before = np.linalg.det(y_new[:, :n, :])
                det_after = np.linalg.det(q[:, :n, :])
                mask = (np.abs(det_before) > _MIN_DET_FOR_SIGN) & (np.abs(det_after) > _MIN_DET_FOR_SIGN)
                if np.any(np.sign(det_before[mask]) != np.sign(det_after[mask])):
                    raise IntegrationError(
                        f"det-sign changed under renormalization near x={x + h:g}")
            rt = np.transpose(r, (0, 2, 1))
            if gram is not None:
                z = np.linalg.solve(rt, gram)
                gram = np.linalg.solve(rt, np.transpose(z, (0, 2, 1)))
                gram = 0.5 * (gram + np.transpose(gram, (0, 2, 1)))
            # first-same-as-last, transformed by the renormalization
            k[0] = np.transpose(np.linalg.solve(rt, np.transpose(k[6], (0, 2, 1))), (0, 2, 1))

            x = x + h
            y = q

            detx, smin, lag = _frame_stats(y, n)
            worst_lag = float(lag.max())
            if worst_lag > 100.0 * controls.tol_lag:
                raise IntegrationError(
                    f"Lagrangian residual {worst_lag:.3e} exceeds "
                    f"{100 * controls.tol_lag:.1e} at x={x:g}; integration unreliable",
                    x=x, residual=worst_lag)
            if record:
                xs.append(x)
                frames.append(y.copy())
                dets.append(detx)
                smins.append(smin)
                lags.append(lag)

            factor = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            h = direction * min(abs(h) * factor, max_step)
        else:
            h = h * max(0.2, 0.9 * err_norm ** -0.2)

        if abs(h) < min_step:
            raise IntegrationError(f"step size underflow at x={x:g}", x=x)

    detx, smin, lag = _frame_stats(y, n)
    if not record:
        return _RawResult(None, None, detx, smin, lag, gram, y)
    return _RawResult(np.array(xs), np.array(frames), np.array(dets),
                      np.array(smins), np.array(lags), gram, y)


# ---------------------------------------------------------------------------
# public single-lambda traces


@dataclass(frozen=True)
class PropagationTrace:
    """Samples of the propagated frame at every accepted step.

    Frames are orthonormal; detX and sigma_min refer to their top blocks, so
    zeros / dips of these traces locate intersections with the Dirichlet
    plane.  p1_gram holds the accumulated Gram matrix of the solution top
    blocks in the coordinates of the final frame.
    """

    problem: Problem
    lam: float
    x_start: float
    x_end: float
    xs: np.ndarray
    frames: np.ndarray          # (k, 2n, n)
    detX: np.ndarray
    sigma_min: np.ndarray
    lagrangian_residual: np.ndarray
    p1_gram: np.ndarray
    controls: OdeControls

    @property
    def n(self) -> int:
        return self.problem.n

    def final_frame(self) -> LagrangianFrame:
        f = self.frames[-1]
        return LagrangianFrame(f[: self.n], f[self.n:], x=float(self.xs[-1]), lam=self.lam)

    def frame_at(self, s: float) -> LagrangianFrame:
        """Frame at an arbitrary position, re-integrated from the nearest
        recorded sample at or before s."""
        if not (self.xs[0] - 1e-12 <= s <= self.xs[-1] + 1e-12):
            raise ValueError(f"s={s:g} outside trace range [{self.xs[0]:g}, {self.xs[-1]:g}]")
        i = int(np.searchsorted(self.xs, s, side="right") - 1)
        i = max(0, min(i, len(self.xs) - 1))
        if abs(self.xs[i] - s) <= 1e-13 * max(1.0, abs(s)):
            f = self.frames[i]
            return LagrangianFrame(f[: self.n], f[self.n:], x=float(self.xs[i]), lam=self.lam)
        res = _integrate(self.problem, np.array([self.lam]), float(self.xs[i]), float(s),
                         self.frames[i][None, :, :], None, self.controls, record=False)
        f = res.final[0]
        return LagrangianFrame(f[: self.n], f[self.n:], x=float(s), lam=self.lam)

    def det_top_at(self, s: float) -> float:
        return self.frame_at(s).det_top

    def sigma_min_at(self, s: float) -> float:
        return self.frame_at(s).sigma_min_top


def propagate_frame(p: Problem, lam: float, x_min: float, x_end: float,
                    controls: Optional[OdeControls] = None) -> PropagationTrace:
    """Propagate the decaying-at-left frame from its asymptotic
    initialization at x_min up to x_end, recording detX / sigma_min traces."""
    controls = controls or OdeControls()
    system = AsymptoticSystem(p.D, p.V_minus)
    q0, gram0 = _initial_state(system, lam, sign=+1.0)
    res = _integrate(p, np.array([float(lam)]), float(x_min), float(x_end),
                     q0[None, :, :], gram0[None, :, :], controls, record=True)
    return PropagationTrace(
        problem=p, lam=float(lam), x_start=float(x_min), x_end=float(x_end),
        xs=res.xs, frames=res.frames[:, 0], detX=res.detX[:, 0],
        sigma_min=res.sigma_min[:, 0], lagrangian_residual=res.lag_residual[:, 0],
        p1_gram=res.gram[0], controls=controls,
    )


@dataclass(frozen=True)
class SweepResult:
    """Final frames of a batched propagation, one per spectral parameter."""

    problem: Problem
    lams: np.ndarray
    x_start: float
    x_end: float
    frames: np.ndarray          # (m, 2n, n)
    detX: np.ndarray
    sigma_min: np.ndarray
    grams: Optional[np.ndarray]
    init_frames: np.ndarray     # (m, 2n, n), gauge-aligned along the grid


def propagate_batch(p: Problem, lams: Sequence[float], x_min: float, x_end: float,
                    controls: Optional[OdeControls] = None, with_gram: bool = False,
                    side: str = "minus") -> SweepResult:
    """Propagate one frame per lambda in lock-step (shared adaptive steps).

    Initial frames are aligned along the lambda grid by the closest
    orthogonal right-factor, so determinants of the final frames vary
    continuously with lambda and sign changes can be bracketed.
    """
    controls = controls or OdeControls()
    lams = np.asarray(list(lams), dtype=float)
    sign = +1.0 if side == "minus" else -1.0
    system = AsymptoticSystem(p.D, p.limit(side))
    inits = []
    grams = []
    prev = None
    for lam in lams:
        q, g = _initial_state(system, lam, sign=sign, align_to=prev)
        inits.append(q)
        grams.append(g)
        prev = q
    F0 = np.array(inits)
    G0 = np.array(grams) if with_gram else None
    res = _integrate(p, lams, float(x_min), float(x_end), F0, G0, controls, record=False)
    return SweepResult(problem=p, lams=lams, x_start=float(x_min), x_end=float(x_end),
                       frames=res.final, detX=res.detX, sigma_min=res.sigma_min,
                       grams=res.gram, init_frames=F0)


def propagate_single(p: Problem, lam: float, x_min: float, x_end: float,
                     controls: Optional[OdeControls] = None, with_gram: bool = False,
                     side: str = "minus", align_to: Optional[np.ndarray] = None):
    """One-lambda variant of propagate_batch; returns (frame, detX,
    sigma_min, gram).  ``align_to`` fixes the initial gauge against a
    reference frame so determinant signs are comparable across calls."""
    controls = controls or OdeControls()
    sign = +1.0 if side == "minus" else -1.0
    system = AsymptoticSystem(p.D, p.limit(side))
    q0, g0 = _initial_state(system, lam, sign=sign, align_to=align_to)
    res = _integrate(p, np.array([float(lam)]), float(x_min), float(x_end),
                     q0[None, :, :], g0[None, :, :] if with_gram else None,
                     controls, record=False)
    n = p.n
    f = res.final[0]
    frame = LagrangianFrame(f[:n], f[n:], x=float(x_end), lam=float(lam))
    return frame, float(res.detX[0]), float(res.sigma_min[0]), (
        None if res.gram is None else res.gram[0])


def propagate_dirichlet_batch(p: Problem, lams: Sequence[float], x_from: float,
                              x_to: float, controls: Optional[OdeControls] = None,
                              with_gram: bool = False):
    """Carry the Dirichlet plane (0; I) from x_from to x_to (either
    direction), one copy per lambda.  Returns (frames, grams); the
    accumulated Gram is the signed integral from x_from to x_to of the
    solutions' top-block products, in final-frame coordinates.

    The initial frame is identical for every lambda and the renormalized
    frame equals the positive-QR factor of the exact propagated frame, so
    the family is continuous in lambda without extra gauge fixing."""
    controls = controls or OdeControls()
    lams = np.asarray(list(lams), dtype=float)
    n = p.n
    f0 = np.vstack([np.zeros((n, n)), np.eye(n)])
    F0 = np.broadcast_to(f0, (len(lams), 2 * n, n)).copy()
    G0 = np.zeros((len(lams), n, n)) if with_gram else None
    res = _integrate(p, lams, float(x_from), float(x_to), F0, G0, controls,
                     record=False)
    return res.final, res.gram


# ---------------------------------------------------------------------------
# truncation of the infinite tail


@dataclass(frozen=True)
class TailFit:
    rate: Optional[float]
    amplitude: Optional[float]
    tol: float
    source: str        # "fit" if modelled, "grid" if read off the samples

    def to_dict(self) -> dict:
        return {"rate": self.rate, "amplitude": self.amplitude,
                "tol": self.tol, "source": self.source}


def truncation_point(p: Problem, tol_asym: float = 1e-10, side: str = "minus"):
    """Smallest-magnitude truncation abscissa x with
    sup_{beyond x} ||V - V_limit|| <= tol_asym under the fitted exponential
    tail model.  Returns (x, TailFit)."""
    grid = p.grid(801)
    limit = p.limit(side)
    fs = np.array([np.linalg.norm(p.potential(x) - limit, 2) for x in grid])
    sgn = -1.0 if side == "minus" else 1.0

    if fs.max() <= tol_asym:
        return 0.0, TailFit(None, None, tol_asym, "grid")

    m = max(len(grid) // 4, 8)
    xs_tail = grid[:m] if side == "minus" else grid[-m:]
    fs_tail = fs[:m] if side == "minus" else fs[-m:]
    fit = fit_exponential_tail(xs_tail, fs_tail, side)
    edge = grid[0] if side == "minus" else grid[-1]
    edge_converged = (fs[0] if side == "minus" else fs[-1]) <= tol_asym

    if fit is None:
        if edge_converged:
            return float(edge), TailFit(None, None, tol_asym, "grid")
        raise MaslovStabError(
            f"could not fit an exponential tail on the {side} side; "
            "pass an explicit truncation point", side=side)

    rate = p.decay_rate if p.decay_rate is not None else fit[0]
    # upper envelope amplitude consistent with the samples at the given rate
    amp = float(np.max(fs_tail * np.exp(rate * np.abs(xs_tail))))
    x_model = sgn * (math.log(amp / tol_asym) / rate)
    if side == "minus":
        x_out = min(0.0, x_model)
        if x_out < edge and edge_converged:
            x_out = float(edge)
    else:
        x_out = max(0.0, x_model)
        if x_out > edge and edge_converged:
            x_out = float(edge)
    return float(x_out), TailFit(float(rate), amp, tol_asym, "fit")


def write_csv_atomic(path, rows: np.ndarray, header: str) -> None:
    """numpy CSV written through a sibling temp file and renamed into place."""
    import os
    import tempfile

    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".",
                               prefix=".tmp-", suffix=".csv")
    os.close(fd)
    try:
        np.savetxt(tmp, rows, delimiter=",", header=header, comments="")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_trace_csv(trace: PropagationTrace, path) -> None:
    """Plot-data emission: columns x, detX, sigma_min, lagrangian_residual."""
    rows = np.column_stack([trace.xs, trace.detX, trace.sigma_min,
                            trace.lagrangian_residual])
    write_csv_atomic(path, rows, "x,detX,sigma_min,lagrangian_residual")

"""Operator data for -D u'' + V(x) u and its construction from gradient
reaction-diffusion systems.

A Problem bundles the dimension, the positive diagonal diffusion D, the
symmetric matrix potential V(x) and its limits V(+-inf).  Potentials must be
pure callables.  Hypotheses checked here gate everything downstream: V
symmetric (real spectrum), positive-definite limits (positive essential
spectrum), integrable approach to the limits (checked through an
exponential-decay proxy fitted to tail samples).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import HypothesisError, MaslovStabError

DEFAULT_SPAN = (-30.0, 30.0)
DEFAULT_GRID_POINTS = 2001


@dataclass(frozen=True)
class Problem:
    """Immutable operator data for H = -D d^2/dx^2 + V(x)."""

    n: int
    D: np.ndarray                      # length-n positive diagonal entries
    V: Callable[[float], np.ndarray]   # x -> symmetric n x n matrix
    V_minus: np.ndarray
    V_plus: np.ndarray
    decay_rate: Optional[float] = None  # exponential rate of ||V(x) - V+-||
    x_span: tuple = DEFAULT_SPAN
    name: str = ""

    def __post_init__(self):
        D = np.atleast_1d(np.asarray(self.D, dtype=float))
        if D.shape != (self.n,):
            raise ValueError(f"D must have length n={self.n}, got shape {D.shape}")
        if np.any(D <= 0.0):
            raise ValueError(f"diffusion entries must be positive, got {D}")
        vm = np.atleast_2d(np.asarray(self.V_minus, dtype=float))
        vp = np.atleast_2d(np.asarray(self.V_plus, dtype=float))
        if vm.shape != (self.n, self.n) or vp.shape != (self.n, self.n):
            raise ValueError("limit matrices must be n x n")
        for a in (D, vm, vp):
            a.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "V_minus", vm)
        object.__setattr__(self, "V_plus", vp)

    def potential(self, x: float) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.V(x), dtype=float))

    def grid(self, n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
        return np.linspace(self.x_span[0], self.x_span[1], n_points)

    def limit(self, side: str) -> np.ndarray:
        return self.V_minus if side == "minus" else self.V_plus

    def shifted(self, a: float) -> "Problem":
        """Same operator with the potential translated: V'(x) = V(x - a)."""
        base = self.V
        return Problem(
            n=self.n,
            D=self.D,
            V=lambda x: base(x - a),
            V_minus=self.V_minus,
            V_plus=self.V_plus,
            decay_rate=self.decay_rate,
            x_span=(self.x_span[0] + a, self.x_span[1] + a),
            name=f"{self.name}+shift({a:g})" if self.name else f"shift({a:g})",
        )


@dataclass(frozen=True)
class PulseProblem:
    """A gradient reaction-diffusion system u_t = D u_xx + gradF(u) together
    with a pulse steady state (decaying to the zero background state)."""

    n: int
    D: np.ndarray
    gradF: Callable[[np.ndarray], np.ndarray]
    hessF: Callable[[np.ndarray], np.ndarray]
    pulse: Callable[[float], np.ndarray]
    pulse_x: Callable[[float], np.ndarray]
    x_span: tuple = DEFAULT_SPAN
    name: str = ""

    def __post_init__(self):
        D = np.atleast_1d(np.asarray(self.D, dtype=float))
        if D.shape != (self.n,) or np.any(D <= 0.0):
            raise ValueError("D must be a length-n vector of positive entries")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    def pulse_value(self, x: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.pulse(x), dtype=float))

    def pulse_slope(self, x: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.pulse_x(x), dtype=float))

    def kernel_vector(self, x: float) -> np.ndarray:
        """(phi_x, D phi_xx) at x; the bottom block uses D phi_xx = -gradF(phi),
        which is exact on steady states."""
        top = self.pulse_slope(x)
        bottom = -np.atleast_1d(np.asarray(self.gradF(self.pulse_value(x)), dtype=float))
        return np.concatenate([top, bottom])

    def steady_residual(self, grid: np.ndarray, fd_step: float = 1e-5) -> tuple:
        """max over grid of ||D phi_xx + gradF(phi)|| with phi_xx from central
        differences of the supplied derivative; returns (max, argmax)."""
        worst, worst_x = 0.0, float(grid[0])
        for x in grid:
            phixx = (self.pulse_slope(x + fd_step) - self.pulse_slope(x - fd_step)) / (2 * fd_step)
            r = float(np.linalg.norm(self.D * phixx + np.asarray(self.gradF(self.pulse_value(x)), dtype=float)))
            if r > worst:
                worst, worst_x = r, float(x)
        return worst, worst_x


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass(frozen=True)
class HypothesisReport:
    symmetry_residual: float
    symmetry_ok: bool
    min_eig_V_minus: float
    min_eig_V_plus: float
    limits_ok: bool
    tail_fit_minus: Optional[tuple]    # (rate, amplitude) or None
    tail_fit_plus: Optional[tuple]
    tail_integral_minus: Optional[float]
    tail_integral_plus: Optional[float]
    decay_ok: bool
    essential_min: float               # min over k of min eig(k^2 D + V+-)
    essential_ok: bool
    passed: bool

    def to_dict(self) -> dict:
        def _fit(f):
            return None if f is None else {"rate": f[0], "amplitude": f[1]}
        return {
            "h1_symmetry": {"residual": self.symmetry_residual, "ok": self.symmetry_ok},
            "h2_limits": {
                "min_eig_V_minus": self.min_eig_V_minus,
                "min_eig_V_plus": self.min_eig_V_plus,
                "ok": self.limits_ok,
            },
            "h3_decay": {
                "fit_minus": _fit(self.tail_fit_minus),
                "fit_plus": _fit(self.tail_fit_plus),
                "tail_integral_minus": self.tail_integral_minus,
                "tail_integral_plus": self.tail_integral_plus,
                "ok": self.decay_ok,
            },
            "essential_spectrum": {"min_over_k": self.essential_min, "ok": self.essential_ok},
            "passed": self.passed,
        }


def fit_exponential_tail(xs: np.ndarray, fs: np.ndarray, side: str):
    """Least-squares fit f ~ amplitude * exp(-rate * |x|) on tail samples.

    Returns (rate, amplitude) with rate > 0, or None if there is nothing to
    fit (all samples at numerical zero) or the fit is not decaying.
    """
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    keep = fs > 1e-290
    if np.count_nonzero(keep) < 4:
        return None
    t = np.abs(xs[keep])
    logf = np.log(fs[keep])
    slope, intercept = np.polyfit(t, logf, 1)
    rate = -slope
    if not (rate > 0.0) or not np.isfinite(rate):
        return None
    return float(rate), float(math.exp(intercept))


def _tail_samples(p: Problem, grid: np.ndarray, side: str):
    limit = p.limit(side)
    m = max(len(grid) // 4, 8)
    xs = grid[:m] if side == "minus" else grid[-m:]
    fs = np.array([np.linalg.norm(p.potential(x) - limit, 2) for x in xs])
    return xs, fs


def check_hypotheses(p: Problem, grid: Optional[np.ndarray] = None,
                     sym_rtol: float = 1e-12, k_max: float = 10.0) -> HypothesisReport:
    """Verify the operator hypotheses on a working grid.

    Raises HypothesisError when a limit matrix is not positive definite:
    then the essential spectrum reaches the closed left half-plane and the
    whole counting framework is inapplicable (the state is already unstable
    through the essential spectrum when the limit has a negative direction).
    """
    if grid is None:
        grid = p.grid()
    grid = np.asarray(grid, dtype=float)

    # (H1) symmetry of sampled values, relative to the sampled norm
    worst = 0.0
    for x in grid[:: max(len(grid) // 200, 1)]:
        v = p.potential(x)
        scale = max(np.linalg.norm(v, 2), 1e-30)
        worst = max(worst, np.linalg.norm(v - v.T, 2) / scale)
    symmetry_ok = worst <= sym_rtol + 1e-14

    # (H2) positive-definite limits
    ev_minus = float(np.linalg.eigvalsh(p.V_minus)[0])
    ev_plus = float(np.linalg.eigvalsh(p.V_plus)[0])
    limits_ok = ev_minus > 0.0 and ev_plus > 0.0
    if not limits_ok:
        raise HypothesisError(
            "limit matrix not positive definite: "
            f"min eig(V-)={ev_minus:.3e}, min eig(V+)={ev_plus:.3e}; "
            "state unstable through the essential spectrum",
            min_eig_V_minus=ev_minus, min_eig_V_plus=ev_plus,
        )

    # (H3) proxy: exponential fit on both tails; the fitted tail integral
    # of ||V - V+-|| beyond the grid is amplitude*exp(-rate*|x_end|)/rate.
    fits, integrals, decay_ok = [], [], True
    for side in ("minus", "plus"):
        xs, fs = _tail_samples(p, grid, side)
        if np.all(fs <= 1e-14 * (1.0 + np.linalg.norm(p.limit(side), 2))):
            fits.append(None)          # already at the limit on the grid
            integrals.append(0.0)
            continue
        fit = fit_exponential_tail(xs, fs, side)
        fits.append(fit)
        if fit is None:
            integrals.append(None)
            decay_ok = False
        else:
            rate, amp = fit
            edge = abs(xs[0] if side == "minus" else xs[-1])
            integrals.append(float(amp * math.exp(-rate * edge) / rate))

    # essential-spectrum positivity: k^2 D + V+- > 0 sampled over k; D > 0
    # dominates as k -> inf, so a finite scan suffices
    ess = math.inf
    for k in np.linspace(0.0, k_max, 41):
        for vlim in (p.V_minus, p.V_plus):
            ess = min(ess, float(np.linalg.eigvalsh(k * k * np.diag(p.D) + vlim)[0]))
    essential_ok = ess > 0.0

    passed = symmetry_ok and limits_ok and decay_ok and essential_ok
    return HypothesisReport(
        symmetry_residual=worst, symmetry_ok=symmetry_ok,
        min_eig_V_minus=ev_minus, min_eig_V_plus=ev_plus, limits_ok=limits_ok,
        tail_fit_minus=fits[0], tail_fit_plus=fits[1],
        tail_integral_minus=integrals[0], tail_integral_plus=integrals[1],
        decay_ok=decay_ok, essential_min=ess, essential_ok=essential_ok,
        passed=passed,
    )


def sup_norm_V(p: Problem, grid: Optional[np.ndarray] = None) -> float:
    """max over the grid of the spectral norm of V(x).  Monotone under grid
    refinement; refine until the change is below 1% for safe bounds."""
    if grid is None:
        grid = p.grid()
    out = 0.0
    for x in grid:
        v = p.potential(x)
        out = max(out, float(np.abs(np.linalg.eigvalsh(v)).max()))
    return out


def choose_lambda_inf(p: Problem, margin: float = 1.0) -> float:
    """sup-norm of the potential plus a margin; below -lambda_inf the
    half-line operators have no spectrum, so the left sweep edge is
    crossing-free."""
    n_pts = 801
    prev = sup_norm_V(p, p.grid(n_pts))
    for _ in range(4):
        n_pts = 2 * n_pts - 1
        cur = sup_norm_V(p, p.grid(n_pts))
        if abs(cur - prev) <= 1e-3 * max(prev, 1e-30):
            prev = cur
            break
        prev = cur
    return prev + margin


def build_from_gradient_rd(pp: PulseProblem, tol_steady: Optional[float] = None,
                           grid: Optional[np.ndarray] = None) -> Problem:
    """Problem with V(x) = -hessF(phi(x)) from a pulse steady state.

    Validates that the profile actually solves D phi'' + gradF(phi) = 0 on
    the grid before using it, and reruns the hypothesis checks on the
    resulting potential.
    """
    if grid is None:
        grid = np.linspace(pp.x_span[0], pp.x_span[1], 401)
    phi_sup = max(float(np.linalg.norm(pp.pulse_value(x))) for x in grid)
    if tol_steady is None:
        tol_steady = 1e-6 * (1.0 + phi_sup)
    residual, at = pp.steady_residual(grid)
    if residual > tol_steady:
        raise MaslovStabError(
            f"profile is not a steady state: residual {residual:.3e} > {tol_steady:.3e} at x={at:g}",
            residual=residual, location=at,
        )

    # hessF symmetry on sampled pulse values
    for x in grid[:: max(len(grid) // 40, 1)]:
        h = np.atleast_2d(np.asarray(pp.hessF(pp.pulse_value(x)), dtype=float))
        if np.linalg.norm(h - h.T, 2) > 1e-10 * (1.0 + np.linalg.norm(h, 2)):
            raise MaslovStabError(f"hessF not symmetric at x={x:g}")

    # pulse decay on the grid tails
    tail = max(float(np.linalg.norm(pp.pulse_value(grid[0]))),
               float(np.linalg.norm(pp.pulse_value(grid[-1]))))
    if tail > 1e-3 * (1.0 + phi_sup):
        raise MaslovStabError(
            f"profile does not decay on the working span (tail norm {tail:.3e}); enlarge x_span")

    hess = pp.hessF
    pulse = pp.pulse
    v_lim = -np.atleast_2d(np.asarray(hess(np.zeros(pp.n)), dtype=float))

    def V(x, _h=hess, _p=pulse):
        return -np.atleast_2d(np.asarray(_h(np.atleast_1d(np.asarray(_p(x), dtype=float))), dtype=float))

    prob = Problem(n=pp.n, D=pp.D, V=V, V_minus=v_lim, V_plus=v_lim,
                   x_span=pp.x_span, name=pp.name or "gradient-rd")
    prob = _with_fitted_decay(prob)
    report = check_hypotheses(prob)
    if not report.passed:
        raise HypothesisError("hypothesis checks failed on the derived potential",
                              report=report.to_dict())
    return prob


def _with_fitted_decay(p: Problem) -> Problem:
    if p.decay_rate is not None:
        return p
    grid = p.grid(801)
    rates = []
    for side in ("minus", "plus"):
        fit = fit_exponential_tail(*_tail_samples(p, grid, side), side)
        if fit is not None:
            rates.append(fit[0])
    if not rates:
        return p
    return Problem(n=p.n, D=p.D, V=p.V, V_minus=p.V_minus, V_plus=p.V_plus,
                   decay_rate=min(rates), x_span=p.x_span, name=p.name)


# ---------------------------------------------------------------------------
# builtin families


def poeschl_teller(c: float, m: float, d: float = 1.0, x_span=None) -> Problem:
    """Scalar well V(x) = c - m(m+1) sech^2(x).  Bound-state levels sit at
    c - (m - j)^2 for integer m, which makes the family the standard
    validation ground truth."""
    if c <= 0:
        raise ValueError("background level c must be positive (positive limits)")
    span = x_span or DEFAULT_SPAN

    def V(x, _c=c, _m=m):
        return np.array([[_c - _m * (_m + 1.0) / math.cosh(x) ** 2]])

    return Problem(n=1, D=np.array([d]), V=V,
                   V_minus=np.array([[c]]), V_plus=np.array([[c]]),
                   decay_rate=2.0, x_span=span,
                   name=f"poeschl-teller(c={c:g}, m={m:g})")


def constant_potential(matrix, d=None, x_span=None) -> Problem:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    n = matrix.shape[0]
    if d is None:
        d = np.ones(n)

    def V(x, _m=matrix):
        return _m

    return Problem(n=n, D=np.asarray(d, dtype=float), V=V, V_minus=matrix,
                   V_plus=matrix, decay_rate=None, x_span=x_span or DEFAULT_SPAN,
                   name="constant")


def block_diagonal(problems: Sequence[Problem]) -> Problem:
    """Decoupled stack of operators; spectra and conjugate-point sets are
    unions over the blocks, with multiplicities adding."""
    n = sum(q.n for q in problems)
    D = np.concatenate([q.D for q in problems])
    parts = tuple(problems)

    def V(x, _parts=parts, _n=n):
        out = np.zeros((_n, _n))
        at = 0
        for q in _parts:
            out[at:at + q.n, at:at + q.n] = q.potential(x)
            at += q.n
        return out

    def blk(mats):
        out = np.zeros((n, n))
        at = 0
        for m in mats:
            k = m.shape[0]
            out[at:at + k, at:at + k] = m
            at += k
        return out

    rates = [q.decay_rate for q in problems if q.decay_rate is not None]
    span = (min(q.x_span[0] for q in problems), max(q.x_span[1] for q in problems))
    return Problem(n=n, D=D, V=V,
                   V_minus=blk([q.V_minus for q in problems]),
                   V_plus=blk([q.V_plus for q in problems]),
                   decay_rate=min(rates) if rates else None,
                   x_span=span,
                   name="block(" + ", ".join(q.name or "?" for q in problems) + ")")


def tabulated_potential(grid, samples, d=None, x_span=None) -> Problem:
    """Potential interpolated from samples: grid strictly increasing, each
    sample a symmetric n x n matrix (row-major flattening accepted).  Values
    are clamped to the end samples outside the grid, which also serve as the
    limit matrices."""
    from scipy.interpolate import CubicSpline

    grid = np.asarray(grid, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("tabulated grid must be strictly increasing")
    if samples.ndim == 2:   # rows of row-major n*n entries
        nsq = samples.shape[1]
        n = int(round(math.sqrt(nsq)))
        if n * n != nsq:
            raise ValueError(f"sample rows must have n^2 entries, got {nsq}")
        samples = samples.reshape(len(grid), n, n)
    n = samples.shape[1]
    for i in (0, len(grid) // 2, len(grid) - 1):
        s = samples[i]
        if np.linalg.norm(s - s.T, 2) > 1e-10 * (1.0 + np.linalg.norm(s, 2)):
            raise ValueError(f"tabulated sample at x={grid[i]:g} is not symmetric")
    spline = CubicSpline(grid, samples, axis=0)
    lo, hi = float(grid[0]), float(grid[-1])
    v_lo, v_hi = samples[0].copy(), samples[-1].copy()

    def V(x, _s=spline, _lo=lo, _hi=hi, _vlo=v_lo, _vhi=v_hi):
        if x <= _lo:
            return _vlo
        if x >= _hi:
            return _vhi
        out = _s(x)
        return 0.5 * (out + out.T)

    if d is None:
        d = np.ones(n)
    prob = Problem(n=n, D=np.asarray(d, dtype=float), V=V, V_minus=v_lo, V_plus=v_hi,
                   x_span=x_span or (lo, hi), name="tabulated")
    return _with_fitted_decay(prob)


# ---------------------------------------------------------------------------
# the closed-form pulse system u_t = u_xx - u + u^2 and stacked copies


def scalar_pulse_system(center: float = 0.0, x_span=None) -> PulseProblem:
    """Gradient system with F(u) = -u^2/2 + u^3/3; the pulse
    phi(x) = 1.5 sech^2((x - center)/2) solves phi'' - phi + phi^2 = 0."""
    span = x_span or (-35.0 + center, 35.0 + center)

    def gradF(u):
        return -u + u * u

    def hessF(u):
        return np.array([[-1.0 + 2.0 * u[0]]])

    def pulse(x, _c=center):
        return np.array([1.5 / math.cosh((x - _c) / 2.0) ** 2])

    def pulse_x(x, _c=center):
        s = (x - _c) / 2.0
        return np.array([-1.5 / math.cosh(s) ** 2 * math.tanh(s)])

    return PulseProblem(n=1, D=np.array([1.0]), gradF=gradF, hessF=hessF,
                        pulse=pulse, pulse_x=pulse_x, x_span=span,
                        name=f"scalar-pulse(center={center:g})")


def decoupled_pulse_system(copies: int = 2, center: float = 0.0, x_span=None) -> PulseProblem:
    """`copies` independent duplicates of the scalar pulse system stacked
    into one vector problem; every index doubles accordingly."""
    base = scalar_pulse_system(center, x_span=x_span)
    k = copies

    def gradF(u):
        return -u + u * u

    def hessF(u, _k=k):
        return np.diag(-1.0 + 2.0 * np.asarray(u, dtype=float))

    def pulse(x, _b=base, _k=k):
        return np.repeat(_b.pulse_value(x), _k)

    def pulse_x(x, _b=base, _k=k):
        return np.repeat(_b.pulse_slope(x), _k)

    return PulseProblem(n=k, D=np.ones(k), gradF=gradF, hessF=hessF,
                        pulse=pulse, pulse_x=pulse_x, x_span=base.x_span,
                        name=f"decoupled-pulse(x{k}, center={center:g})")


def scalar_pulse_problem(center: float = 0.0) -> Problem:
    return build_from_gradient_rd(scalar_pulse_system(center))


def double_pulse_problem(center: float = 0.0) -> Problem:
    return build_from_gradient_rd(decoupled_pulse_system(2, center))

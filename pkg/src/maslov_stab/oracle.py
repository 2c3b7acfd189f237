"""Independent eigenvalue counts by direct finite-difference discretization.

Second-order central differences on [x_left, x_right] with Dirichlet ends
turn -D u'' + V(x) u into a symmetric block-tridiagonal (bandwidth n) matrix
whose low end of the spectrum approximates the discrete spectrum of the
half-line / whole-line operators.  Every eigenvalue is reported with a
Richardson error estimate from paired h and h/2 grids, and eigenvalues that
cannot be resolved away from zero are flagged "kernel-ambiguous" instead of
being counted on either side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eig_banded

from .errors import MaslovStabError, StabilizationError
from .problem import Problem
from .propagation import truncation_point


@dataclass(frozen=True)
class Discretization:
    """Dirichlet grid for the finite-difference operator."""

    x_left: float
    x_right: float
    h: float

    def points(self) -> np.ndarray:
        n_cells = int(round((self.x_right - self.x_left) / self.h))
        return self.x_left + self.h * np.arange(1, n_cells)


def assemble_banded(p: Problem, disc: Discretization) -> np.ndarray:
    """Lower-banded storage (bandwidth n) of the discretized operator with
    interleaved unknowns u_a(x_i) at row i*n + a.  Symmetric by construction:
    only V(x_i) couples components at one grid point, and the off-diagonal
    blocks are the constant -D/h^2."""
    n = p.n
    xs = disc.points()
    m = len(xs)
    h2 = disc.h * disc.h
    v = np.empty((m, n, n))
    for i, x in enumerate(xs):
        v[i] = p.potential(x)
    bands = np.zeros((n + 1, m * n))
    idx = np.arange(m * n)
    a = idx % n
    i = idx // n
    bands[0] = 2.0 * p.D[a] / h2 + v[i, a, a]
    for k in range(1, n):
        valid = a + k <= n - 1
        bands[k, valid] = v[i[valid], a[valid] + k, a[valid]]
    bands[n, : (m - 1) * n] = -np.tile(p.D, m - 1) / h2
    return bands


def _eigs_below(p: Problem, disc: Discretization, lo: float, hi: float) -> np.ndarray:
    bands = assemble_banded(p, disc)
    return eig_banded(bands, lower=True, eigvals_only=True,
                      select="v", select_range=(lo, hi))


@dataclass(frozen=True)
class SpectrumReport:
    """Richardson-extrapolated eigenvalues below the essential-spectrum floor.

    morse counts eigenvalues certified strictly negative; nonpositive_count
    additionally includes the kernel-ambiguous ones (|lambda| within
    eig_zero_tol), which are listed separately so callers can exclude them
    from exact integer comparisons.
    """

    x_left: float
    x_right: float
    h: float                       # coarse grid spacing (fine grid is h/2)
    cutoff: float
    eigenvalues: tuple             # extrapolated values, ascending
    richardson_error: tuple        # per-eigenvalue estimates
    eig_zero_tol: tuple            # per-eigenvalue zero-resolution tolerance
    morse: int
    nonpositive_count: int
    kernel_ambiguous: tuple        # extrapolated values flagged unresolvable

    def to_dict(self) -> dict:
        return {
            "x_left": self.x_left, "x_right": self.x_right, "h": self.h,
            "cutoff": self.cutoff,
            "eigenvalues": list(self.eigenvalues),
            "richardson_error": list(self.richardson_error),
            "eig_zero_tol": list(self.eig_zero_tol),
            "morse": self.morse,
            "nonpositive_count": self.nonpositive_count,
            "kernel_ambiguous": list(self.kernel_ambiguous),
        }


def spectrum_on_interval(p: Problem, x_left: float, x_right: float, h: float = 0.02,
                         cutoff: Optional[float] = None, lo: Optional[float] = None,
                         zero_tol_factor: float = 10.0) -> SpectrumReport:
    """Eigenvalues below the essential floor on a fixed interval, from two
    nested grids (h and h/2, identical endpoints) with h^2 -> h^4 Richardson
    extrapolation."""
    span = x_right - x_left
    if span <= 0:
        raise ValueError("empty discretization interval")
    n_cells = max(int(round(span / h)), 8)
    h_eff = span / n_cells

    floor = min(float(np.linalg.eigvalsh(p.V_minus)[0]),
                float(np.linalg.eigvalsh(p.V_plus)[0]))
    if cutoff is None:
        # just below the essential floor: excludes the discretized continuum,
        # which only fills in from the floor upward
        cutoff = floor - 1e-2 * (1.0 + abs(floor))
    if lo is None:
        lo = -abs(cutoff) - 100.0   # safely below the Kato lower bound

    coarse = _eigs_below(p, Discretization(x_left, x_right, h_eff), lo, cutoff)
    fine = _eigs_below(p, Discretization(x_left, x_right, h_eff / 2.0), lo, cutoff)
    k = min(len(coarse), len(fine))
    coarse, fine = coarse[:k], fine[:k]
    extrap = (4.0 * fine - coarse) / 3.0
    rich = np.abs(coarse - fine) / 3.0

    # resolution floor: eigensolver accuracy scales with the matrix norm
    mat_scale = 2.0 * float(p.D.max()) / (h_eff / 2.0) ** 2
    noise = 1e3 * np.finfo(float).eps * mat_scale
    zero_tol = np.maximum(zero_tol_factor * rich, noise)

    morse = int(np.count_nonzero(extrap < -zero_tol))
    ambiguous = extrap[np.abs(extrap) <= zero_tol]
    nonpositive = int(np.count_nonzero(extrap <= zero_tol))
    return SpectrumReport(
        x_left=float(x_left), x_right=float(x_right), h=float(h_eff),
        cutoff=float(cutoff),
        eigenvalues=tuple(float(v) for v in extrap),
        richardson_error=tuple(float(v) for v in rich),
        eig_zero_tol=tuple(float(v) for v in zero_tol),
        morse=morse, nonpositive_count=nonpositive,
        kernel_ambiguous=tuple(float(v) for v in ambiguous),
    )


def default_left_end(p: Problem, tol_asym: float = 1e-10, margin_rates: float = 5.0) -> float:
    """Dirichlet proxy position for the decaying left end: the truncation
    point pushed further out by a few decay lengths."""
    x0, fit = truncation_point(p, tol_asym, side="minus")
    rate = fit.rate if fit.rate is not None else (p.decay_rate or 1.0)
    return float(x0 - margin_rates / max(rate, 1e-3))


def eigenvalues_HL(p: Problem, L: float, h: float = 0.02,
                   x_left: Optional[float] = None,
                   cutoff: Optional[float] = None) -> SpectrumReport:
    """Spectrum report for the half-line operator truncated at u(L) = 0,
    with the left boundary approximating decay at -inf."""
    if x_left is None:
        x_left = default_left_end(p)
    if x_left >= L - 1.0:
        x_left = L - max(10.0, abs(L) + 10.0)
    return spectrum_on_interval(p, x_left, float(L), h=h, cutoff=cutoff)


def morse_whole_line(p: Problem, h: float = 0.02, max_doublings: int = 4,
                     radius: Optional[float] = None):
    """Negative-eigenvalue count on a large symmetric interval, stabilized
    under interval doubling (the h-halving pair is built into every report).
    Returns (morse, final report, diagnostics)."""
    if radius is None:
        left = abs(default_left_end(p))
        x1, fit1 = truncation_point(p, side="plus")
        rate = fit1.rate if fit1.rate is not None else (p.decay_rate or 1.0)
        radius = max(left, x1 + 5.0 / max(rate, 1e-3), 10.0)
    history = []
    rep = spectrum_on_interval(p, -radius, radius, h=h)
    history.append({"radius": radius, "morse": rep.morse,
                    "ambiguous": len(rep.kernel_ambiguous)})
    for _ in range(max_doublings):
        radius2 = 2.0 * radius
        rep2 = spectrum_on_interval(p, -radius2, radius2, h=h)
        history.append({"radius": radius2, "morse": rep2.morse,
                        "ambiguous": len(rep2.kernel_ambiguous)})
        if rep2.morse == rep.morse:
            return rep2.morse, rep2, {"stabilized": True, "history": history}
        radius, rep = radius2, rep2
    raise StabilizationError(
        f"negative-eigenvalue count did not stabilize up to radius {radius:g}; "
        "enlarge the domain or check the decay hypotheses", history=history)


@dataclass(frozen=True)
class MonotonicityReport:
    j: int
    Ls: tuple
    values: tuple
    errors: tuple
    pair_status: tuple     # per consecutive pair: "decreasing" | "indistinguishable" | "violation"
    ok: bool               # no violation beyond combined error bars

    def rows(self):
        return list(zip(self.Ls, self.values, self.errors))

    def to_dict(self) -> dict:
        return {"j": self.j, "L": list(self.Ls), "lambda_j": list(self.values),
                "richardson_error": list(self.errors),
                "pair_status": list(self.pair_status), "ok": self.ok}


def eigenvalue_monotonicity(p: Problem, j: int, L_grid: Sequence[float],
                            h: float = 0.02, x_left: Optional[float] = None) -> MonotonicityReport:
    """Track the j-th (1-based) eigenvalue of the truncated operator along a
    grid of right endpoints.  Decrease certified only beyond the combined
    Richardson bars of the two samples; a certified increase marks the
    report as failed."""
    if x_left is None:
        x_left = default_left_end(p)
    values, errors = [], []
    for L in L_grid:
        rep = eigenvalues_HL(p, float(L), h=h, x_left=x_left)
        if len(rep.eigenvalues) < j:
            raise MaslovStabError(
                f"operator truncated at L={L:g} has fewer than {j} eigenvalues "
                f"below the essential floor (found {len(rep.eigenvalues)})",
                L=L, found=len(rep.eigenvalues))
        values.append(rep.eigenvalues[j - 1])
        errors.append(rep.richardson_error[j - 1])
    status = []
    ok = True
    for i in range(len(values) - 1):
        bar = errors[i] + errors[i + 1]
        change = values[i + 1] - values[i]
        if change < -bar:
            status.append("decreasing")
        elif change > bar:
            status.append("violation")
            ok = False
        else:
            status.append("indistinguishable")
    return MonotonicityReport(j=j, Ls=tuple(float(L) for L in L_grid),
                              values=tuple(values), errors=tuple(errors),
                              pair_status=tuple(status), ok=ok)


def export_spectrum_csv(rows, path) -> None:
    """Plot-data emission: rows of (L, h, j, lambda_j, error_estimate)."""
    from .propagation import write_csv_atomic

    arr = np.array([[r[0], r[1], r[2], r[3], r[4]] for r in rows], dtype=float)
    write_csv_atomic(path, arr, "L,h,j,lambda_j,error_estimate")

"""Symplectic linear algebra on R^(2n).

Planes are represented by 2n x n frames split into a top block X (function
values) and a bottom block Y (scaled derivatives).  The reference plane for
all intersection counts is the Dirichlet plane {(p1, p2) : p1 = 0}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

# Residual tolerance for the Lagrangian condition, relative to the frame
# norm.  Frames produced by the pipeline are orthonormal, so this is
# effectively absolute.
TOL_LAG = 1e-8

# Singular values of the top block below this threshold count toward the
# intersection with the Dirichlet plane.  Frames are orthonormal
# (sigma_max = 1), so the threshold is absolute.
TOL_RANK = 1e-8


@dataclass(frozen=True)
class SymplecticForm:
    """The standard symplectic form omega(v, w) = <v, Omega w> with
    Omega = [[0, -I], [I, 0]]."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be positive, got {self.n}")

    @property
    def matrix(self) -> np.ndarray:
        n = self.n
        omega = np.zeros((2 * n, 2 * n))
        omega[:n, n:] = -np.eye(n)
        omega[n:, :n] = np.eye(n)
        return omega


def symplectic_product(v1, v2, form: SymplecticForm) -> float:
    """<v1, Omega v2>.  Antisymmetric in its arguments."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    n = form.n
    if v1.shape != (2 * n,) or v2.shape != (2 * n,):
        raise ValueError(
            f"expected vectors of length {2 * n}, got {v1.shape} and {v2.shape}"
        )
    # <v1, Omega v2> = -<a1, b2> + <b1, a2> for v = (a, b)
    return float(v2[n:] @ v1[:n] * -1.0 + v2[:n] @ v1[n:])


@dataclass(frozen=True)
class LagrangianFrame:
    """A 2n x n frame spanning (numerically) a Lagrangian plane.

    X holds the top n rows, Y the bottom n rows.  ``x`` is the position the
    frame was evaluated at (-inf for the asymptotic plane), ``lam`` the
    spectral parameter.  Arrays are frozen after construction.
    """

    X: np.ndarray
    Y: np.ndarray
    x: Optional[float] = None
    lam: Optional[float] = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape != Y.shape or X.shape[0] != X.shape[1]:
            raise ValueError(f"expected square blocks of equal shape, got {X.shape} and {Y.shape}")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def stacked(self) -> np.ndarray:
        """The full 2n x n frame matrix."""
        return np.vstack([self.X, self.Y])

    def orthonormalized(self) -> "LagrangianFrame":
        """Same plane with orthonormal columns (QR with positive diagonal R,
        which preserves the sign of det X)."""
        q = positive_qr(self.stacked())[0]
        n = self.n
        return LagrangianFrame(q[:n], q[n:], x=self.x, lam=self.lam)

    @property
    def det_top(self) -> float:
        return float(np.linalg.det(self.X))

    @property
    def sigma_min_top(self) -> float:
        return float(np.linalg.svd(self.X, compute_uv=False)[-1])


@dataclass(frozen=True)
class DirichletPlane:
    """The plane {(p1, p2) : p1 = 0}, encoding the boundary condition u = 0."""

    n: int

    def canonical_frame(self) -> LagrangianFrame:
        return LagrangianFrame(np.zeros((self.n, self.n)), np.eye(self.n))


class LagrangianCheck(NamedTuple):
    ok: bool
    residual: float        # ||X^T Y - Y^T X||_2
    sigma_min: float       # smallest singular value of the stacked frame


def is_lagrangian(frame: LagrangianFrame, tol: float = TOL_LAG) -> LagrangianCheck:
    """Check the Lagrangian condition X^T Y - Y^T X = 0 and full column rank.

    Degenerate frames are reported, not raised."""
    skew = frame.X.T @ frame.Y - frame.Y.T @ frame.X
    residual = float(np.linalg.norm(skew, 2))
    sigma_min = float(np.linalg.svd(frame.stacked(), compute_uv=False)[-1])
    return LagrangianCheck(residual <= tol and sigma_min > tol, residual, sigma_min)


class DirichletIntersection(NamedTuple):
    dimension: int
    kernel_basis: np.ndarray   # n x k, orthonormal, coordinates in the frame's columns


def dirichlet_intersection(frame: LagrangianFrame, tol_rank: float = TOL_RANK) -> DirichletIntersection:
    """Dimension of (span of frame) ∩ (Dirichlet plane) by singular value
    thresholding of the top block, plus the coordinate vectors of the
    intersection in the frame's column basis.

    The threshold is relative to sigma_max of the stacked frame, so the
    result is invariant under column rescaling.
    """
    scale = float(np.linalg.svd(frame.stacked(), compute_uv=False)[0])
    _, svals, vt = np.linalg.svd(frame.X)
    small = svals <= tol_rank * scale
    k = int(np.count_nonzero(small))
    kernel = vt[len(svals) - k:].T if k else np.zeros((frame.n, 0))
    return DirichletIntersection(k, kernel)


def positive_qr(a: np.ndarray):
    """Thin QR with the upper-triangular factor forced to a positive
    diagonal.  det R > 0, so the orientation (in particular the sign of the
    determinant of any square sub-block row selection) of the column span
    representation is preserved.  Supports stacked inputs (..., m, k).
    """
    q, r = np.linalg.qr(a)
    diag = np.diagonal(r, axis1=-2, axis2=-1).copy()
    signs = np.where(diag < 0.0, -1.0, 1.0)
    q = q * signs[..., None, :]
    r = r * signs[..., :, None]
    return q, r


def subspace_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Largest principal angle (radians) between the column spans of a and b,
    computed through the projection residual (accurate near zero, where the
    cosine formulation loses half the digits)."""
    qa = np.linalg.qr(np.atleast_2d(a))[0]
    qb = np.linalg.qr(np.atleast_2d(b))[0]
    resid = qa - qb @ (qb.T @ qa)
    s = np.linalg.svd(resid, compute_uv=False)[0]
    return float(np.arcsin(np.clip(s, 0.0, 1.0)))

"""Primitives on St(p, n), the manifold of n-by-p matrices with orthonormal columns.

A point is S with S^T S = I_p and 1 <= p < n (p = n is excluded: the square
orthogonal group is not path connected, so it never appears here).  Tangent
vectors at S are the matrices D with sym(S^T D) = 0.  The tangent projection is

    Pi(X, S) = X - S sym(S^T X) = S skew(S^T X) + (I - S S^T) X,

and retraction maps S + t D to its nearest orthonormal factor (polar).  All
values are immutable; every operation is a pure function, safe to share across
threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, RetractionError
from .seeding import as_generator

#: Membership tolerance for orthonormality and tangency checks.
ORTH_TOL = 1e-10


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part (A + A^T) / 2."""
    return 0.5 * (a + a.T)


def skew(a: np.ndarray) -> np.ndarray:
    """Skew-symmetric part (A - A^T) / 2."""
    return 0.5 * (a - a.T)


def _checked_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"expected an n x p matrix, got shape {m.shape}")
    n, p = m.shape
    if p < 1 or p >= n:
        raise DimensionError(f"need 1 <= p < n, got (n, p) = ({n}, {p})")
    return m


def validate(m, tol: float = ORTH_TOL) -> tuple[bool, float]:
    """Orthonormality test: (||M^T M - I||_max <= tol, that deviation)."""
    m = _checked_matrix(m)
    dev = float(np.max(np.abs(m.T @ m - np.eye(m.shape[1]))))
    return dev <= tol, dev


@dataclass(frozen=True)
class StiefelPoint:
    """An n x p matrix with orthonormal columns; one agent's state."""

    entries: np.ndarray

    def __post_init__(self):
        m = _checked_matrix(self.entries).copy()
        dev = float(np.max(np.abs(m.T @ m - np.eye(m.shape[1]))))
        if dev > ORTH_TOL:
            raise ValueError(
                f"columns not orthonormal: max deviation {dev:.3e} > {ORTH_TOL:g}"
            )
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def p(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class TangentVector:
    """A direction D at a base point S, with sym(S^T D) = 0."""

    base: StiefelPoint
    entries: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.entries, dtype=float).copy()
        if d.shape != self.base.entries.shape:
            raise DimensionError(
                f"tangent shape {d.shape} does not match base shape "
                f"{self.base.entries.shape}"
            )
        defect = float(np.max(np.abs(sym(self.base.entries.T @ d))))
        if defect > ORTH_TOL:
            raise ValueError(
                f"not tangent at base: max |sym(S^T D)| = {defect:.3e} > {ORTH_TOL:g}"
            )
        d.flags.writeable = False
        object.__setattr__(self, "entries", d)

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


def project_tangent(x, s: StiefelPoint) -> TangentVector:
    """Project an ambient n x p matrix onto the tangent space at s."""
    x = np.asarray(x, dtype=float)
    if x.shape != s.entries.shape:
        raise DimensionError(f"shape {x.shape} does not match point shape {s.entries.shape}")
    d = x - s.entries @ sym(s.entries.T @ x)
    return TangentVector(s, d)


def polar_factor(a: np.ndarray) -> np.ndarray:
    """Nearest matrix with orthonormal columns, via thin SVD.

    Accepts a single n x p matrix or a batch (..., n, p).  Raises
    RetractionError when the argument is numerically rank-deficient, since the
    nearest orthonormal factor is then not well defined.
    """
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    smin = float(np.min(s))
    smax = float(np.max(s))
    if smin <= 1e-13 * max(smax, 1.0):
        raise RetractionError(
            f"rank-deficient retraction argument: sigma_min = {smin:.3e}, "
            f"sigma_max = {smax:.3e}",
            sigma_min=smin,
            sigma_max=smax,
        )
    return u @ vt


def retract(s: StiefelPoint, delta: TangentVector, t: float) -> StiefelPoint:
    """Move from s along delta with step t and map back onto the manifold.

    Uses the polar retraction: the nearest orthonormal factor of S + t D.  It
    agrees with S + t D to first order, ||retract(S, D, t) - (S + t D)|| = O(t^2).
    """
    if not np.array_equal(delta.base.entries, s.entries):
        raise DimensionError("tangent vector is based at a different point")
    return StiefelPoint(polar_factor(s.entries + float(t) * delta.entries))


def random_stiefel(n: int, p: int, rng) -> StiefelPoint:
    """Uniform (Haar) sample: QR of a Gaussian matrix with R-diagonal sign fix.

    The sign correction makes the factorization unique, which both removes the
    sampling bias of raw QR and makes output bit-stable for a fixed seed.
    """
    if p < 1 or p >= n:
        raise DimensionError(f"need 1 <= p < n, got (n, p) = ({n}, {p})")
    gen = as_generator(rng)
    g = gen.standard_normal((n, p))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return StiefelPoint(q * signs)


def chordal_distance(s1: StiefelPoint, s2: StiefelPoint) -> float:
    """Frobenius distance ||S1 - S2||; equals sqrt(2p - 2<S1, S2>)."""
    if s1.entries.shape != s2.entries.shape:
        raise DimensionError(
            f"dimension mismatch: {s1.entries.shape} vs {s2.entries.shape}"
        )
    return float(np.linalg.norm(s1.entries - s2.entries))

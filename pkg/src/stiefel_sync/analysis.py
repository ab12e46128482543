"""Potential evaluation, equilibrium certificates, and synchronization certificates.

The disagreement potential over a weighted graph is

    U = sum_e a_ij (p - <S_i, S_j>) = 1/2 sum_e a_ij ||S_i - S_j||^2.

A configuration is an equilibrium when, for every agent, both components of
the projected neighbor sum vanish:

    skew(S_i^T V_i) = 0  and  (I - S_i S_i^T) V_i = 0,   V_i = sum_j a_ij S_j,

in which case V_i = S_i P_i with P_i = S_i^T V_i symmetric.  The second-order
variation of U at an equilibrium along a common perturbation D, projected
per agent, is the quadratic form

    q(D) = 2 sum_e q_ik + sum_i q_i,
    q_ik = -<Pi_i D, Pi_k D>,
    q_i  = <Pi_i D, S_i sym(V_i^T Pi_i D) + (Pi_i D) P_i>,

whose trace over the elemental n x p basis has the closed form (unit weights)

    (1/2) tr M = sum_e f(S_i, S_k),
    f(X, Y) = (n - (p+1)/2) <X, Y> - ((p+2)/4) ||X^T Y||^2
              - (1/4) <X, Y>^2 + (1 - n + p) p.

Maximizing f over pairs of frames relaxes the search for unstable directions
to a two-agent problem; its Lagrange conditions force the cross-Gramian
Z = X^T Y to be symmetric with spectrum inside {-1, lambda_*, +1}, and
integer programs over the multiplicities settle the sign of the maximum.  A
strictly negative q certifies that an equilibrium is not a local minimum.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .dynamics import SwarmState, max_edge_distance
from .errors import ConvergenceError, DimensionError, NotEquilibriumError
from .graph import Graph
from .manifold import StiefelPoint, polar_factor, random_stiefel
from .seeding import derive_rng

#: Eigenvalue clustering band for spectral multiplicity counts.
CLUSTER_TOL = 1e-4


def _check_sizes(state: SwarmState, g: Graph):
    if state.n_agents != g.n_vertices:
        raise DimensionError(
            f"state has {state.n_agents} agents but graph has {g.n_vertices} vertices"
        )


def _require_unit_weights(g: Graph, op: str):
    if not g.unit_weights:
        raise ValueError(
            f"{op} is defined for unit edge weights only; normalize the graph first"
        )


def potential(state: SwarmState, g: Graph) -> float:
    """Disagreement potential sum_e a_ij (p - <S_i, S_j>); zero iff consensus."""
    _check_sizes(state, g)
    ei, ej, w = g.edge_arrays()
    inner = np.einsum("erc,erc->e", state.stack[ei], state.stack[ej])
    return float(np.sum(w * (state.p - inner)))


@dataclass(frozen=True)
class EquilibriumCertificate:
    """Per-agent residuals of the two equilibrium conditions.

    ``residual_skew[i]`` is ||skew(S_i^T V_i)||, ``residual_range[i]`` is
    ||(I - S_i S_i^T) V_i||.  When both vanish, ``p_matrices[i]`` = S_i^T V_i
    is the (symmetric) coefficient of V_i = S_i P_i.
    """

    residual_skew: tuple[float, ...]
    residual_range: tuple[float, ...]
    p_matrices: tuple[np.ndarray, ...]
    p_symmetry_defect: tuple[float, ...]
    tol: float
    is_equilibrium: bool

    @property
    def max_residual(self) -> float:
        return max(max(self.residual_skew), max(self.residual_range))

    def to_dict(self) -> dict:
        return {
            "residual_skew": list(self.residual_skew),
            "residual_range": list(self.residual_range),
            "P_symmetry_defect": list(self.p_symmetry_defect),
            "is_equilibrium": self.is_equilibrium,
        }


def certify_equilibrium(state: SwarmState, g: Graph, tol: float = 1e-8) -> EquilibriumCertificate:
    """Evaluate both equilibrium residuals for every agent."""
    _check_sizes(state, g)
    s = state.stack
    v = np.einsum("ij,jrc->irc", g.weight_matrix(), s)
    p_mats = np.einsum("arc,ard->acd", s, v)
    skew_part = 0.5 * (p_mats - p_mats.transpose(0, 2, 1))
    res_skew = np.sqrt((skew_part * skew_part).sum(axis=(1, 2)))
    range_part = v - s @ p_mats
    res_range = np.sqrt((range_part * range_part).sum(axis=(1, 2)))
    defect = 2.0 * res_skew
    ok = bool(res_skew.max() < tol and res_range.max() < tol)
    return EquilibriumCertificate(
        residual_skew=tuple(float(x) for x in res_skew),
        residual_range=tuple(float(x) for x in res_range),
        p_matrices=tuple(p_mats[i].copy() for i in range(state.n_agents)),
        p_symmetry_defect=tuple(float(x) for x in defect),
        tol=tol,
        is_equilibrium=ok,
    )


def _q_value(state: SwarmState, g: Graph, delta: np.ndarray) -> float:
    s = state.stack
    sd = np.einsum("arc,rd->acd", s, delta)
    pd = delta[None] - s @ (0.5 * (sd + sd.transpose(0, 2, 1)))
    ei, ej, _ = g.edge_arrays()
    q_edges = -float(np.einsum("erc,erc->", pd[ei], pd[ej]))
    v = np.einsum("ij,jrc->irc", g.weight_matrix(), s)
    p_mats = np.einsum("arc,ard->acd", s, v)
    vtpd = np.einsum("arc,ard->acd", v, pd)
    inner = s @ (0.5 * (vtpd + vtpd.transpose(0, 2, 1))) + pd @ p_mats
    q_diag = float(np.einsum("arc,arc->", pd, inner))
    return 2.0 * q_edges + q_diag


def quadratic_form_q(state: SwarmState, g: Graph, delta, tol: float = 1e-8) -> float:
    """Second-order variation of U along the common perturbation delta.

    Defined only at certified equilibria of a unit-weight graph (the
    simplification V_i = S_i P_i enters the diagonal blocks); raises
    NotEquilibriumError otherwise.  At any consensus state the value is zero
    for every delta; a negative value exhibits a descent direction.
    """
    _check_sizes(state, g)
    _require_unit_weights(g, "quadratic_form_q")
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (state.n, state.p):
        raise DimensionError(
            f"perturbation shape {delta.shape} does not match (n, p) = "
            f"({state.n}, {state.p})"
        )
    cert = certify_equilibrium(state, g, tol)
    if not cert.is_equilibrium:
        raise NotEquilibriumError(
            f"state is not an equilibrium: max residual {cert.max_residual:.3e} "
            f"exceeds {tol:g}",
            max_residual=cert.max_residual,
        )
    return _q_value(state, g, delta)


def _pair_value(z: np.ndarray, n: int, p: int) -> float:
    tr = float(np.trace(z))
    return (
        (n - (p + 1) / 2.0) * tr
        - (p + 2) / 4.0 * float(np.sum(z * z))
        - 0.25 * tr * tr
        + (1 - n + p) * p
    )


def pair_objective_f(x: StiefelPoint, y: StiefelPoint) -> float:
    """Two-agent objective f(X, Y); f(X, X) = 0, and the trace formula is
    (1/2) tr M = sum over edges of f at the endpoint states."""
    if x.entries.shape != y.entries.shape:
        raise DimensionError(
            f"dimension mismatch: {x.entries.shape} vs {y.entries.shape}"
        )
    return _pair_value(x.entries.T @ y.entries, x.n, x.p)


def trace_M(state: SwarmState, g: Graph) -> float:
    """Closed-form trace of the second-variation matrix over the elemental basis.

    Requires unit weights (the formula is derived for a_ij = 1).  Meaningful
    at equilibria, where it equals sum_{s,t} q(E_st); at consensus it is zero.
    """
    _check_sizes(state, g)
    _require_unit_weights(g, "trace_M")
    ei, ej, _ = g.edge_arrays()
    n, p = state.n, state.p
    total = 0.0
    for a, b in zip(ei, ej):
        z = state.stack[a].T @ state.stack[b]
        total += _pair_value(z, n, p)
    return 2.0 * total


# ---------------------------------------------------------------------------
# Nonlinear program: maximize f over pairs of frames
# ---------------------------------------------------------------------------


def _f_and_grads(x: np.ndarray, y: np.ndarray, n: int, p: int):
    z = x.T @ y
    tr = float(np.trace(z))
    val = (
        (n - (p + 1) / 2.0) * tr
        - (p + 2) / 4.0 * float(np.sum(z * z))
        - 0.25 * tr * tr
        + (1 - n + p) * p
    )
    c = n - (p + 1) / 2.0 - 0.5 * tr
    gx = c * y - 0.5 * (p + 2) * (y @ z.T)
    gy = c * x - 0.5 * (p + 2) * (x @ z)
    return val, gx, gy


def _project(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    m = x.T @ g
    return g - x @ (0.5 * (m + m.T))


@dataclass(frozen=True)
class AscentResult:
    """Best stationary pair found by the multistart projected ascent."""

    value: float
    x: StiefelPoint
    y: StiefelPoint
    iterations: int
    grad_norm: float
    starts_converged: int


def _ascend_once(x, y, n, p, grad_tol, max_iters, armijo):
    # Spectral (Barzilai-Borwein) trial step, safeguarded by nonmonotone
    # Armijo halving.  The maximum can be quartically flat next to
    # quadratically damped directions; a fixed step serves one regime only,
    # while the spectral step tracks the curvature seen along the trajectory.
    val, gx, gy = _f_and_grads(x, y, n, p)
    xi_x = _project(x, gx)
    xi_y = _project(y, gy)
    history = deque([val], maxlen=10)
    s = 1.0 / n
    prev = None
    it = 0
    while it < max_iters:
        g2 = float(np.sum(xi_x * xi_x) + np.sum(xi_y * xi_y))
        gnorm = float(np.linalg.norm(xi_x) + np.linalg.norm(xi_y))
        if gnorm < grad_tol:
            return val, x, y, it, gnorm, True
        it += 1
        if prev is not None:
            dx = np.concatenate([(x - prev[0]).ravel(), (y - prev[1]).ravel()])
            dg = np.concatenate([(xi_x - prev[2]).ravel(), (xi_y - prev[3]).ravel()])
            denom = float(dx @ dg)
            if denom < 0.0:
                s = float(np.clip(-(dx @ dx) / denom, 1e-12, 1e10))
            else:
                s = min(s * 10.0, 1e10)
        ref = min(history)
        while True:
            x_new = polar_factor(x + s * xi_x)
            y_new = polar_factor(y + s * xi_y)
            val_new, gx_new, gy_new = _f_and_grads(x_new, y_new, n, p)
            if val_new >= ref + armijo * s * g2:
                break
            s *= 0.5
            if s < 1e-16:
                # No resolvable ascent left at this accuracy.
                return val, x, y, it, gnorm, False
        prev = (x, y, xi_x, xi_y)
        x, y, val, gx, gy = x_new, y_new, val_new, gx_new, gy_new
        xi_x = _project(x, gx)
        xi_y = _project(y, gy)
        history.append(val)
    gnorm = float(np.linalg.norm(xi_x) + np.linalg.norm(xi_y))
    return val, x, y, it, gnorm, gnorm < grad_tol


def maximize_f(
    n: int,
    p: int,
    multistarts: int = 32,
    seed: int = 0,
    grad_tol: float = 1e-7,
    max_iters: int = 5000,
    armijo: float = 1e-4,
) -> AscentResult:
    """Projected-gradient ascent of f over St(p, n)^2 with backtracking.

    Runs ``multistarts`` independent ascents from uniform random pairs (start
    k draws from the sub-stream (seed, k)) and returns the best first-order
    stationary point.  The line search doubles the trial step after every
    accepted move and halves on Armijo failure, which handles the flat
    quartic neighborhoods that occur when lambda_* = 1.  Raises
    ConvergenceError (with the best iterate attached) if no start reaches the
    stationarity tolerance.
    """
    if not 1 <= p < n:
        raise DimensionError(f"need 1 <= p < n, got (n, p) = ({n}, {p})")
    best = None
    best_any = None
    converged = 0
    for k in range(multistarts):
        rng = derive_rng(seed, k)
        x0 = random_stiefel(n, p, rng).entries
        y0 = random_stiefel(n, p, rng).entries
        val, x, y, it, gnorm, ok = _ascend_once(
            x0, y0, n, p, grad_tol, max_iters, armijo
        )
        if best_any is None or val > best_any[0]:
            best_any = (val, x, y, it, gnorm)
        if ok:
            converged += 1
            if best is None or val > best[0]:
                best = (val, x, y, it, gnorm)
    if best is None:
        val, x, y, it, gnorm = best_any
        raise ConvergenceError(
            f"no start reached stationarity {grad_tol:g} within {max_iters} "
            f"iterations; best value {val:.6e} with gradient norm {gnorm:.3e}",
            best_value=val,
            best_x=StiefelPoint(x),
            best_y=StiefelPoint(y),
        )
    val, x, y, it, gnorm = best
    return AscentResult(
        value=val,
        x=StiefelPoint(x),
        y=StiefelPoint(y),
        iterations=it,
        grad_norm=gnorm,
        starts_converged=converged,
    )


# ---------------------------------------------------------------------------
# Lagrange conditions and the spectrum of Z = X^T Y
# ---------------------------------------------------------------------------


def lambda_star_from_trace(n: int, p: int, trace_z: float) -> float:
    """Middle root lambda_* = (2n - p - 1 - tr Z) / (p + 2)."""
    return (2 * n - p - 1 - trace_z) / (p + 2)


def lambda_star(n: int, p: int, m_minus: int, m_star: int) -> float:
    """lambda_* = (2n - 2p - 1 + 2 m_- + m_*) / (p + 2 + m_*).

    Follows from tr Z = -m_- + lambda_* m_* + m_+ and m_- + m_* + m_+ = p.
    """
    if m_minus < 0 or m_star < 0:
        raise ValueError("multiplicities must be nonnegative")
    if m_minus + m_star > p:
        raise ValueError(f"m_- + m_* = {m_minus + m_star} exceeds p = {p}")
    return (2 * n - 2 * p - 1 + 2 * m_minus + m_star) / (p + 2 + m_star)


def m_minus_upper_bound(n: int, p: int) -> float:
    """Bound m_- <= (3/2)(p + 1) - n implied by lambda_* <= 1.

    Negative exactly when 3(p + 1) < 2n, forcing m_* = 0 there; zero on the
    boundary 3(p + 1) = 2n, where either m_* = 0 or m_- = 0.
    """
    return 1.5 * (p + 1) - n


@dataclass(frozen=True)
class LagrangeReport:
    """Residuals of the stationarity system for a candidate pair (X, Y)."""

    residual_x: float
    residual_y: float
    skew_defect: float
    eigenvalues: tuple[float, ...]
    eigenvalue_distances: tuple[float, ...]
    lambda_star: float


def lagrange_residual(x: StiefelPoint, y: StiefelPoint) -> LagrangeReport:
    """Evaluate the first-order stationarity system at (X, Y).

    Uses the closed-form multipliers Lambda = -(n - (p+1)/2 - tr(Z)/2) Z
    + ((p+2)/2) Z Z^T and Xi = Lambda^T, reports the norms of both equation
    residuals, the skew defect of Z, and the distance of each eigenvalue of
    sym(Z) to the admissible root set {-1, lambda_*, +1}.
    """
    if x.entries.shape != y.entries.shape:
        raise DimensionError(
            f"dimension mismatch: {x.entries.shape} vs {y.entries.shape}"
        )
    n, p = x.n, x.p
    xe, ye = x.entries, y.entries
    z = xe.T @ ye
    tr = float(np.trace(z))
    c = n - (p + 1) / 2.0 - 0.5 * tr
    lam = -c * z + 0.5 * (p + 2) * (z @ z.T)
    xi = lam.T
    res_x = c * ye - 0.5 * (p + 2) * (ye @ z.T) + xe @ lam
    res_y = c * xe - 0.5 * (p + 2) * (xe @ z) + ye @ xi
    lam_star = lambda_star_from_trace(n, p, tr)
    eigs = np.linalg.eigvalsh(0.5 * (z + z.T))
    roots = np.array([-1.0, lam_star, 1.0])
    dists = np.min(np.abs(eigs[:, None] - roots[None, :]), axis=1)
    return LagrangeReport(
        residual_x=float(np.linalg.norm(res_x)),
        residual_y=float(np.linalg.norm(res_y)),
        skew_defect=float(np.linalg.norm(0.5 * (z - z.T))),
        eigenvalues=tuple(float(e) for e in eigs),
        eigenvalue_distances=tuple(float(d) for d in dists),
        lambda_star=lam_star,
    )


@dataclass(frozen=True)
class SpectralCertificate:
    """Eigenvalue multiplicities of Z = X^T Y against the roots {-1, lambda_*, +1}."""

    z: np.ndarray
    skew_defect: float
    eigenvalues: tuple[float, ...]
    m_minus: int
    m_star: int
    m_plus: int
    lambda_star: float
    max_cluster_distance: float

    @property
    def clustered(self) -> bool:
        return self.m_minus + self.m_star + self.m_plus == len(self.eigenvalues)

    def to_dict(self) -> dict:
        return {
            "m_minus": self.m_minus,
            "m_star": self.m_star,
            "m_plus": self.m_plus,
            "lambda_star": self.lambda_star,
            "skew_defect": self.skew_defect,
        }


def spectral_certificate(
    x: StiefelPoint, y: StiefelPoint, cluster_tol: float = CLUSTER_TOL
) -> SpectralCertificate:
    """Cluster the spectrum of sym(Z) onto {-1, lambda_*, +1}.

    lambda_* comes from the trace of Z.  When lambda_* > 1 + cluster_tol it is
    not an admissible eigenvalue (the spectrum is bounded by 1), so nothing is
    assigned to it.  Each eigenvalue is counted toward the nearest admissible
    root if it lies within cluster_tol; exact ties prefer +1, then -1, then
    lambda_*, which leaves the total assignment distance unchanged.
    """
    if x.entries.shape != y.entries.shape:
        raise DimensionError(
            f"dimension mismatch: {x.entries.shape} vs {y.entries.shape}"
        )
    z = x.entries.T @ y.entries
    tr = float(np.trace(z))
    lam_star = lambda_star_from_trace(x.n, x.p, tr)
    eigs = np.linalg.eigvalsh(0.5 * (z + z.T))
    roots = [(1.0, "plus"), (-1.0, "minus")]
    if lam_star <= 1.0 + cluster_tol:
        roots.append((lam_star, "star"))
    counts = {"minus": 0, "star": 0, "plus": 0}
    worst = 0.0
    for e in eigs:
        d_best, label = min(
            ((abs(e - r), lbl) for r, lbl in roots), key=lambda t: t[0]
        )
        worst = max(worst, d_best)
        if d_best <= cluster_tol:
            counts[label] += 1
    return SpectralCertificate(
        z=z.copy(),
        skew_defect=float(np.linalg.norm(0.5 * (z - z.T))),
        eigenvalues=tuple(float(e) for e in eigs),
        m_minus=counts["minus"],
        m_star=counts["star"],
        m_plus=counts["plus"],
        lambda_star=lam_star,
        max_cluster_distance=float(worst),
    )


# ---------------------------------------------------------------------------
# Integer programs over the multiplicities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntegerProgramResult:
    """Exhaustive table of h(m_+) = (2n + 1) m_+ - m_+^2 over m_+ in {0..p}."""

    m_plus_opt: int
    table: tuple[tuple[int, int], ...]
    recurrence_ok: bool


def solve_integer_program(n: int, p: int) -> IntegerProgramResult:
    """Maximize (2n + 1) m_+ - m_+^2 over m_+ in {0, ..., p} by enumeration.

    Since m_+ <= p <= n the objective is increasing on the feasible range, so
    the optimum is m_+ = p (the cross-Gramian is the identity).  The table is
    kept in exact integer arithmetic and the forward difference
    h(m+1) - h(m) = 2(n - m) is checked across it.
    """
    if not 1 <= p <= n:
        raise DimensionError(f"need 1 <= p <= n, got (n, p) = ({n}, {p})")
    table = tuple((m, (2 * n + 1) * m - m * m) for m in range(p + 1))
    ok = all(
        table[m + 1][1] - table[m][1] == 2 * (n - m) for m in range(p)
    )
    m_opt = max(table, key=lambda row: row[1])[0]
    return IntegerProgramResult(m_plus_opt=m_opt, table=table, recurrence_ok=ok)


@dataclass(frozen=True)
class MinlpResult:
    """Grid solution of the boundary-case mixed-integer program."""

    lambda_opt: float
    m_star_opt: int
    objective: float
    table: tuple[tuple[float, int, float], ...]


def solve_minlp(n: int, p: int, grid_size: int = 101) -> MinlpResult:
    """Maximize -(n/6 + 1/4 + m_*/4) (1 - lambda_*)^2 m_* on the boundary case.

    Applies only when 3(p + 1) = 2n exactly (with m_- = 0 there).  lambda_* is
    enumerated on a uniform grid over [0, 1] including both endpoints, m_*
    over {0, ..., p}.  The optimum is zero, attained exactly when lambda_* = 1
    or m_* = 0; every interior point is strictly negative.
    """
    if 3 * (p + 1) != 2 * n:
        raise ValueError(
            f"the mixed-integer program covers the boundary case 3(p + 1) = 2n "
            f"only; got (n, p) = ({n}, {p})"
        )
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    lams = np.linspace(0.0, 1.0, grid_size)
    rows = []
    best = None
    for m in range(p + 1):
        coeff = n / 6.0 + 0.25 + 0.25 * m
        for lam in lams:
            obj = -coeff * (1.0 - lam) ** 2 * m
            rows.append((float(lam), m, float(obj)))
            if best is None or obj > best[2]:
                best = (float(lam), m, float(obj))
    return MinlpResult(
        lambda_opt=best[0],
        m_star_opt=best[1],
        objective=best[2],
        table=tuple(rows),
    )


def synchronization_bound(p: int, n: int) -> bool:
    """Exact test of the synchronization condition 3(p + 1) <= 2n."""
    if not 1 <= p < n:
        raise DimensionError(f"need 1 <= p < n, got (n, p) = ({n}, {p})")
    return 3 * (p + 1) <= 2 * n


# ---------------------------------------------------------------------------
# Escape directions at non-consensus equilibria
# ---------------------------------------------------------------------------


def escape_direction(
    state: SwarmState,
    g: Graph,
    attempts: int = 64,
    rng=0,
    tol: float = 1e-8,
    consensus_tol: float = 1e-6,
    threshold: float = -1e-10,
):
    """Search common perturbations for a direction with q < threshold.

    Candidates are the np elemental basis matrices plus ``attempts`` Gaussian
    draws.  Returns (delta, q_value) for the most negative q found, or None if
    every candidate is nonnegative up to the threshold.  Rejects consensus
    states (nothing to escape) and uncertified states.
    """
    _check_sizes(state, g)
    _require_unit_weights(g, "escape_direction")
    cert = certify_equilibrium(state, g, tol)
    if not cert.is_equilibrium:
        raise NotEquilibriumError(
            f"state is not an equilibrium: max residual {cert.max_residual:.3e}",
            max_residual=cert.max_residual,
        )
    if max_edge_distance(state, g) < consensus_tol:
        raise ValueError("state is a consensus configuration; nothing to escape")
    gen = derive_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    n, p = state.n, state.p
    candidates = []
    for s in range(n):
        for t in range(p):
            e = np.zeros((n, p))
            e[s, t] = 1.0
            candidates.append(e)
    for _ in range(int(attempts)):
        candidates.append(gen.standard_normal((n, p)))
    best_delta = None
    best_q = 0.0
    for delta in candidates:
        q = _q_value(state, g, delta)
        if q < best_q:
            best_q = q
            best_delta = delta
    if best_delta is None or best_q >= threshold:
        return None
    return best_delta, best_q

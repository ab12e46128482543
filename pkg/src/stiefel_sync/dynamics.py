"""Consensus gradient flow on St(p, n)^N and its time integration.

The flow couples N agents over an undirected weighted graph:

    dS_i/dt = Pi_i( sum_{j ~ i} a_ij S_j ),

which is steepest descent for the quadratic disagreement potential (see
``analysis.potential``).  Discretization is an explicit Euler step followed by
a polar retraction, with an optional classical 4-stage scheme that retracts
after the combined update.  The circle case p = 1, n = 2 reduces to coupled
phase oscillators in polar coordinates, and a common skew drift pair
(Omega, Xi) yields the homogeneous-oscillator variant that a rotating frame
maps back onto the plain flow.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, IntegrationError
from .graph import Graph
from .manifold import ORTH_TOL, StiefelPoint, TangentVector, polar_factor, random_stiefel
from .seeding import as_generator


@dataclass(frozen=True)
class SwarmState:
    """Ordered configuration of N agent states sharing one (n, p).

    Stored as a read-only (N, n, p) stack; ``points`` materializes the list of
    individual states.
    """

    stack: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.stack, dtype=float).copy()
        if a.ndim != 3:
            raise DimensionError(f"expected an (N, n, p) stack, got shape {a.shape}")
        n_agents, n, p = a.shape
        if n_agents < 1:
            raise DimensionError("need at least one agent")
        if p < 1 or p >= n:
            raise DimensionError(f"need 1 <= p < n, got (n, p) = ({n}, {p})")
        gram = np.einsum("arc,ard->acd", a, a)
        dev = float(np.max(np.abs(gram - np.eye(p))))
        if dev > ORTH_TOL:
            raise ValueError(
                f"some agent state is not orthonormal: max deviation {dev:.3e}"
            )
        a.flags.writeable = False
        object.__setattr__(self, "stack", a)

    @classmethod
    def from_points(cls, points) -> "SwarmState":
        pts = list(points)
        if not pts:
            raise DimensionError("need at least one agent")
        shape = pts[0].entries.shape
        for s in pts:
            if s.entries.shape != shape:
                raise DimensionError("all agents must share one (n, p)")
        return cls(np.stack([s.entries for s in pts]))

    @property
    def n_agents(self) -> int:
        return self.stack.shape[0]

    @property
    def n(self) -> int:
        return self.stack.shape[1]

    @property
    def p(self) -> int:
        return self.stack.shape[2]

    @property
    def points(self) -> tuple[StiefelPoint, ...]:
        return tuple(StiefelPoint(m) for m in self.stack)


def random_swarm(n_agents: int, n: int, p: int, rng) -> SwarmState:
    """N independent uniform samples on St(p, n)."""
    gen = as_generator(rng)
    return SwarmState.from_points(
        random_stiefel(n, p, gen) for _ in range(n_agents)
    )


@dataclass(frozen=True)
class FlowConfig:
    """Integrator settings.

    ``step = None`` selects the default h = 0.05 / (max_i sum_j a_ij).
    ``grad_tol`` is the equilibrium threshold on the max agent gradient norm,
    ``consensus_tol`` the threshold on the max-edge chordal distance; they are
    kept two orders apart so a twisted state is never mistaken for consensus.
    """

    step: float | None = None
    max_time: float = 300.0
    grad_tol: float = 1e-8
    consensus_tol: float = 1e-6
    record_every: int = 0
    method: str = "euler"

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not self.max_time > 0:
            raise ValueError(f"max_time must be positive, got {self.max_time}")
        if not (self.grad_tol > 0 and self.consensus_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.record_every < 0:
            raise ValueError("record_every must be >= 0")
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")

    def resolve_step(self, g: Graph) -> float:
        if self.step is not None:
            return self.step
        return 0.05 / g.max_weighted_degree()


class TerminationReason(enum.Enum):
    CONSENSUS = "Consensus"
    NON_CONSENSUS_EQUILIBRIUM = "NonConsensusEquilibrium"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class Trajectory:
    """Recorded samples of one integration run.

    Potentials are non-increasing along the run up to integrator tolerance.
    The initial and final states are always recorded; intermediate samples are
    kept every ``record_every`` steps when that is positive.
    """

    times: np.ndarray
    states: tuple[SwarmState, ...]
    potentials: np.ndarray
    grad_norms: np.ndarray
    max_edge_distances: np.ndarray
    steps: int

    @property
    def final_state(self) -> SwarmState:
        return self.states[-1]


def _rhs(stack: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Batched flow right-hand side Pi_i(V_i), V_i = sum_j a_ij S_j.

    Valid for any (N, n, p) stack; orthonormality is not assumed, which makes
    the same formula usable at the off-manifold interior stages of rk4.
    """
    v = np.einsum("ij,jrc->irc", w, stack)
    m = np.einsum("arc,ard->acd", stack, v)
    return v - stack @ (0.5 * (m + m.transpose(0, 2, 1)))


def _potential(stack: np.ndarray, ei, ej, wts, p: int) -> float:
    inner = np.einsum("erc,erc->e", stack[ei], stack[ej])
    return float(np.sum(wts * (p - inner)))


def _max_edge_distance(stack: np.ndarray, ei, ej) -> float:
    if len(ei) == 0:
        return 0.0
    diff = stack[ei] - stack[ej]
    return float(np.sqrt((diff * diff).sum(axis=(1, 2)).max()))


def max_edge_distance(state: SwarmState, g: Graph) -> float:
    """Largest chordal distance over the edges of g."""
    ei, ej, _ = g.edge_arrays()
    return _max_edge_distance(state.stack, ei, ej)


def _advance(stack: np.ndarray, w: np.ndarray, h: float, method: str) -> np.ndarray:
    if method == "euler":
        y = stack + h * _rhs(stack, w)
    else:
        k1 = _rhs(stack, w)
        k2 = _rhs(stack + 0.5 * h * k1, w)
        k3 = _rhs(stack + 0.5 * h * k2, w)
        k4 = _rhs(stack + h * k3, w)
        y = stack + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return polar_factor(y)


def _check_sizes(state: SwarmState, g: Graph):
    if state.n_agents != g.n_vertices:
        raise DimensionError(
            f"state has {state.n_agents} agents but graph has {g.n_vertices} vertices"
        )


def gradient_rhs(state: SwarmState, g: Graph) -> list[TangentVector]:
    """Per-agent steepest-descent direction Pi_i(sum_j a_ij S_j)."""
    _check_sizes(state, g)
    f = _rhs(state.stack, g.weight_matrix())
    points = state.points
    return [TangentVector(points[i], f[i]) for i in range(state.n_agents)]


def step_flow(state: SwarmState, g: Graph, config: FlowConfig) -> SwarmState:
    """One simultaneous update of all agents: Euler (or rk4) plus retraction."""
    _check_sizes(state, g)
    h = config.resolve_step(g)
    return SwarmState(_advance(state.stack, g.weight_matrix(), h, config.method))


def integrate(
    state0: SwarmState, g: Graph, config: FlowConfig
) -> tuple[Trajectory, TerminationReason]:
    """Run the flow until consensus, a non-consensus equilibrium, or timeout.

    Consensus is declared when the max-edge chordal distance drops below
    ``consensus_tol``; it is checked before the gradient test so the stronger
    label wins.  A gradient norm below ``grad_tol`` without consensus yields
    NonConsensusEquilibrium.  Raises IntegrationError with the offending step
    index if the state stops being finite.
    """
    _check_sizes(state0, g)
    w = g.weight_matrix()
    ei, ej, wts = g.edge_arrays()
    h = config.resolve_step(g)
    p = state0.p

    stack = state0.stack
    times: list[float] = []
    states: list[SwarmState] = []
    potentials: list[float] = []
    grad_norms: list[float] = []
    distances: list[float] = []

    def record(k: int, grad: float, dist: float):
        times.append(k * h)
        states.append(SwarmState(stack))
        potentials.append(_potential(stack, ei, ej, wts, p))
        grad_norms.append(grad)
        distances.append(dist)

    max_steps = int(np.ceil(config.max_time / h))
    k = 0
    reason = TerminationReason.TIMEOUT
    while True:
        f = _rhs(stack, w)
        grad = float(np.sqrt((f * f).sum(axis=(1, 2)).max()))
        dist = _max_edge_distance(stack, ei, ej)
        due = k == 0 or (config.record_every > 0 and k % config.record_every == 0)
        if dist < config.consensus_tol:
            reason = TerminationReason.CONSENSUS
            break
        if grad < config.grad_tol:
            reason = TerminationReason.NON_CONSENSUS_EQUILIBRIUM
            break
        if k >= max_steps:
            reason = TerminationReason.TIMEOUT
            break
        if due:
            record(k, grad, dist)
        stack = _advance(stack, w, h, config.method)
        if not np.all(np.isfinite(stack)):
            raise IntegrationError(
                f"nonfinite state after step {k + 1}", step_index=k + 1
            )
        k += 1

    record(k, grad, dist)
    traj = Trajectory(
        times=np.array(times),
        states=tuple(states),
        potentials=np.array(potentials),
        grad_norms=np.array(grad_norms),
        max_edge_distances=np.array(distances),
        steps=k,
    )
    return traj, reason


def kuramoto_rhs(thetas, g: Graph) -> np.ndarray:
    """Phase velocities theta_i' = sum_{j ~ i} a_ij sin(theta_j - theta_i)."""
    th = np.asarray(thetas, dtype=float)
    if th.ndim != 1 or th.shape[0] != g.n_vertices:
        raise DimensionError(
            f"expected {g.n_vertices} angles, got shape {th.shape}"
        )
    w = g.weight_matrix()
    return (w * np.sin(th[None, :] - th[:, None])).sum(axis=1)


def _check_skew(a: np.ndarray, size: int, name: str):
    a = np.asarray(a, dtype=float)
    if a.shape != (size, size):
        raise DimensionError(f"{name} must be {size} x {size}, got {a.shape}")
    if float(np.max(np.abs(a + a.T), initial=0.0)) > 1e-12:
        raise ValueError(f"{name} is not skew-symmetric within 1e-12")
    return a


def homogeneous_rhs(state: SwarmState, g: Graph, omega, xi) -> list[np.ndarray]:
    """Drifting-oscillator right-hand side Omega S_i + S_i Xi + Pi_i(V_i).

    Omega (n x n) and Xi (p x p) must be skew-symmetric; the drift is then
    tangent and the flow stays on the manifold.
    """
    _check_sizes(state, g)
    omega = _check_skew(omega, state.n, "Omega")
    xi = _check_skew(xi, state.p, "Xi")
    f = _rhs(state.stack, g.weight_matrix())
    out = f + np.einsum("rs,asc->arc", omega, state.stack) + state.stack @ xi
    return [out[i] for i in range(state.n_agents)]


def integrate_homogeneous(
    state0: SwarmState,
    g: Graph,
    omega,
    xi,
    duration: float,
    step: float,
    method: str = "rk4",
) -> tuple[np.ndarray, list[SwarmState]]:
    """Fixed-step integration of the drifting flow, recording every step.

    Support routine for checking that the rotating frame
    exp(-t Omega) S_i(t) exp(-t Xi) reproduces the plain flow.
    """
    _check_sizes(state0, g)
    omega = _check_skew(omega, state0.n, "Omega")
    xi = _check_skew(xi, state0.p, "Xi")
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    w = g.weight_matrix()

    def rhs(stack):
        return (
            _rhs(stack, w)
            + np.einsum("rs,asc->arc", omega, stack)
            + stack @ xi
        )

    n_steps = int(round(duration / step))
    stack = state0.stack
    states = [SwarmState(stack)]
    for k in range(n_steps):
        if method == "euler":
            y = stack + step * rhs(stack)
        else:
            k1 = rhs(stack)
            k2 = rhs(stack + 0.5 * step * k1)
            k3 = rhs(stack + 0.5 * step * k2)
            k4 = rhs(stack + step * k3)
            y = stack + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        stack = polar_factor(y)
        if not np.all(np.isfinite(stack)):
            raise IntegrationError(f"nonfinite state after step {k + 1}", step_index=k + 1)
        states.append(SwarmState(stack))
    times = step * np.arange(n_steps + 1)
    return times, states


def twisted_state(n_agents: int, winding: int) -> np.ndarray:
    """Angles theta_i = 2 pi w i / N, i = 1..N.

    On the cycle graph all edge differences equal 2 pi w / N, so the phase
    velocities telescope to zero: this is an equilibrium for every winding.
    """
    if n_agents < 3:
        raise ValueError(f"need N >= 3, got {n_agents}")
    if not 0 <= winding < n_agents:
        raise ValueError(f"need 0 <= winding < N, got {winding}")
    return 2.0 * np.pi * winding * np.arange(1, n_agents + 1) / n_agents


def embed_circle(thetas) -> SwarmState:
    """Map angles to unit vectors (cos, sin) in St(1, 2)."""
    th = np.asarray(thetas, dtype=float)
    stack = np.stack([np.cos(th), np.sin(th)], axis=1)[:, :, None]
    return SwarmState(stack)


def circle_angles(state: SwarmState) -> np.ndarray:
    """Inverse of embed_circle (angles in (-pi, pi])."""
    if state.n != 2 or state.p != 1:
        raise DimensionError("circle angles need states on St(1, 2)")
    return np.arctan2(state.stack[:, 1, 0], state.stack[:, 0, 0])


def twisted_orbit_distance(state: SwarmState, winding: int) -> float:
    """Max per-agent chordal distance to the nearest rotated twisted state.

    The twisted configurations with a given winding form a circle's worth of
    equilibria; the common rotation is fitted by the circular mean of the
    angle residuals before measuring.
    """
    th = circle_angles(state)
    base = twisted_state(state.n_agents, winding)
    offset = np.angle(np.sum(np.exp(1j * (th - base))))
    target = embed_circle(base + offset)
    per_agent = np.linalg.norm(state.stack - target.stack, axis=(1, 2))
    return float(per_agent.max())

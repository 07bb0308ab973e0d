"""Consensus equilibrium state and the Mann-iteration solver.

``K`` agents ``F_i`` must agree on one reconstruction: at equilibrium every
agent maps its own input ``v_i = x* + u_i`` back to the consensus ``x*``,
and the weighted corrections ``u_i`` average to zero.  Stacking the agent
outputs as ``F(v)`` and the weighted average as ``G(v)`` (every component
replaced by ``sum_i mu_i v_i``), equilibria are exactly the solutions of
``F(v) = G(v)``.

The solver iterates

    x <- F(v);  z <- G(2x - v);  v <- v + 2 rho (z - x)

which is the relaxed (Mann) fixed-point iteration of ``(2G - I)(2F - I)``
and converges for ``rho`` in (0, 1) whenever ``2F - I`` is nonexpansive and
a solution exists.  Progress is tracked by the normalized residual

    convergence_error = ||G(v) - F(v)|| / (sigma_n ||G(v)||)

where ``sigma_n`` is the noise scale the prior agent was built for.

States hold arbitrary equally-shaped ndarrays, so the same machinery runs
both on images and on the small dense vectors used by
:mod:`macesr.theory`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linops import bicubic_upsample

__all__ = [
    "StackedState",
    "MaceConfig",
    "SolveReport",
    "AgentFailure",
    "DivergenceError",
    "UndefinedMetricError",
    "weighted_average",
    "stack_average",
    "convergence_error",
    "mace_solve",
    "initialize",
]

AgentLike = Callable[[np.ndarray], np.ndarray]


class AgentFailure(RuntimeError):
    """An agent raised during a solve; carries the iteration index."""


class DivergenceError(RuntimeError):
    """Non-finite values appeared in the iterate stack."""


class UndefinedMetricError(ValueError):
    """Convergence error is undefined (zero-norm consensus)."""


@dataclass
class StackedState:
    """``K`` equally shaped signals plus their positive weights.

    Attributes:
        components: array of shape ``(K, *signal_shape)``.
        weights: ``K`` positive reals summing to one.
    """

    components: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.components = np.asarray(self.components, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.components.ndim < 2:
            raise ValueError("components must have shape (K, *signal_shape)")
        k = self.components.shape[0]
        if self.weights.shape != (k,):
            raise ValueError(
                f"expected {k} weights, got shape {self.weights.shape}"
            )
        if np.any(self.weights <= 0.0):
            raise ValueError("all weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")

    @property
    def num_agents(self) -> int:
        return self.components.shape[0]

    @classmethod
    def from_signal(
        cls, x0: np.ndarray, weights: Sequence[float]
    ) -> "StackedState":
        """Stack ``K`` copies of one signal."""
        weights = np.asarray(weights, dtype=np.float64)
        components = np.broadcast_to(
            np.asarray(x0, dtype=np.float64), (len(weights),) + np.shape(x0)
        ).copy()
        return cls(components=components, weights=weights)


def weighted_average(state: StackedState) -> np.ndarray:
    """The consensus candidate ``sum_i mu_i v_i``."""
    k = state.num_agents
    w = state.weights.reshape((k,) + (1,) * (state.components.ndim - 1))
    return np.sum(w * state.components, axis=0)


def stack_average(state: StackedState) -> StackedState:
    """``G``: replace every component by the weighted average."""
    avg = weighted_average(state)
    components = np.broadcast_to(avg, state.components.shape).copy()
    return StackedState(components=components, weights=state.weights.copy())


def _apply_agents(
    agents: Sequence[AgentLike], state: StackedState, iteration: int
) -> np.ndarray:
    """Stack ``F_i(v_i)``; agent exceptions are wrapped with context."""
    outputs = np.empty_like(state.components)
    for i, agent in enumerate(agents):
        try:
            outputs[i] = agent(state.components[i])
        except Exception as exc:
            raise AgentFailure(
                f"agent {i} failed at iteration {iteration}: {exc}"
            ) from exc
    return outputs


def convergence_error(
    state: StackedState, agents: Sequence[AgentLike], sigma_n: float
) -> float:
    """Normalized equilibrium residual ``||G(v) - F(v)|| / (sigma_n ||G(v)||)``.

    Zero exactly when the stacked agent outputs coincide with the stacked
    weighted average.
    """
    if sigma_n <= 0:
        raise ValueError("sigma_n must be positive")
    f_stack = _apply_agents(agents, state, iteration=-1)
    g_stack = stack_average(state).components
    g_norm = float(np.linalg.norm(g_stack))
    if g_norm == 0.0:
        raise UndefinedMetricError(
            "consensus has zero norm; convergence error is undefined"
        )
    return float(np.linalg.norm(g_stack - f_stack)) / (sigma_n * g_norm)


@dataclass(frozen=True)
class MaceConfig:
    """Solver settings.

    Attributes:
        rho: Mann relaxation, in (0, 1).
        max_iters: iteration budget.
        tol: stop once the convergence error falls below this.
        sigma_n: prior noise scale used in the convergence-error metric.
    """

    rho: float = 0.5
    max_iters: int = 20
    tol: float = 0.05
    sigma_n: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie strictly inside (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.sigma_n <= 0.0:
            raise ValueError("sigma_n must be positive")


@dataclass
class SolveReport:
    """Outcome of one consensus solve.

    ``final_image`` is the weighted average of the final stack; when
    ``converged`` every agent maps ``final_state`` components back to it
    within the tolerance.
    """

    final_image: np.ndarray
    iterations_run: int
    convergence_trace: list[float]
    converged: bool
    final_state: StackedState = field(repr=False, default=None)


def mace_solve(
    agents: Sequence[AgentLike],
    x0: np.ndarray,
    config: MaceConfig,
    weights: Sequence[float] | None = None,
) -> SolveReport:
    """Find a consensus equilibrium of ``agents`` by Mann iteration.

    Args:
        agents: at least two shape-compatible maps (``Agent`` instances or
            plain callables).  The per-iteration agent applications are
            mutually independent; they are evaluated against separate
            stack components.
        x0: initial signal, stacked to initialize every component.
        config: relaxation, budget, tolerance and error scale.
        weights: agent weights ``mu`` (default: uniform).

    Returns:
        :class:`SolveReport` with the consensus signal, the per-iteration
        convergence-error trace, and the final stacked state.

    Raises:
        AgentFailure: an agent raised; the iteration index is attached.
        DivergenceError: non-finite values appeared in the iterates.
    """
    if len(agents) < 2:
        raise ValueError("need at least two agents to form a consensus")
    if weights is None:
        weights = np.full(len(agents), 1.0 / len(agents))
    state = StackedState.from_signal(np.asarray(x0, dtype=np.float64), weights)

    trace: list[float] = []
    converged = False
    for iteration in range(config.max_iters):
        f_stack = _apply_agents(agents, state, iteration)
        if not np.all(np.isfinite(f_stack)):
            raise DivergenceError(
                f"non-finite agent output at iteration {iteration}"
            )
        g_stack = stack_average(state).components
        g_norm = float(np.linalg.norm(g_stack))
        if g_norm == 0.0:
            raise UndefinedMetricError(
                "consensus has zero norm; convergence error is undefined"
            )
        error = float(np.linalg.norm(g_stack - f_stack)) / (config.sigma_n * g_norm)
        trace.append(error)
        if error < config.tol:
            converged = True
            break

        reflected = StackedState(
            components=2.0 * f_stack - state.components,
            weights=state.weights,
        )
        z_stack = stack_average(reflected).components
        new_components = state.components + 2.0 * config.rho * (z_stack - f_stack)
        if not np.all(np.isfinite(new_components)):
            raise DivergenceError(
                f"non-finite iterate after update at iteration {iteration}"
            )
        state = StackedState(components=new_components, weights=state.weights)

    return SolveReport(
        final_image=weighted_average(state),
        iterations_run=len(trace),
        convergence_trace=trace,
        converged=converged,
        final_state=state,
    )


def initialize(y: np.ndarray, factor: int) -> np.ndarray:
    """Default starting reconstruction: bicubic upsampling clipped at zero."""
    return np.maximum(bicubic_upsample(y, factor), 0.0)

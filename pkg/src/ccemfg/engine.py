"""Euler-Maruyama simulation of the N-player system and the representative
player, plus a McKean-Vlasov particle fixed point.

Conventions:

* left-endpoint evaluation of actions and measures in every Euler step;
* the empirical measure is recomputed synchronously each step, so all
  players advance against the frozen time-t measure;
* one dedicated counter stream per (replication, player) for the driving
  noise, so results are bit-identical however the work is chunked, and the
  terminal Brownian value does not depend on the step count (bridge
  construction, see :mod:`ccemfg._pathgen_py`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import backend, rng
from .flows import ParticleFlow
from .model import MeasureView, ModelSpec


class SimulationError(RuntimeError):
    """Raised when the state leaves the finite range; carries the step."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] with the given number of steps."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class ConstantStrategy:
    """Open-loop strategy holding a fixed action."""

    value: float

    def __call__(self, t, x, mview):
        return np.broadcast_to(np.float64(self.value), np.shape(x))


def as_action_fn(strategy) -> Callable:
    """Normalize scalars / ConstantStrategy / callables to (t, x, m) -> a."""
    if callable(strategy):
        return strategy
    return ConstantStrategy(float(strategy))


@dataclass(frozen=True)
class SimulationBatch:
    """One replication of the N-player system."""

    paths: np.ndarray            # (N, steps+1)
    actions: np.ndarray          # (N, steps)
    noise_seed: int
    scenario_index: int = 0


def noise_keys(seed: int, rep_ids, player_ids) -> np.ndarray:
    """Per-(replication, player) noise stream keys, shape (R, N)."""
    rep_ids = np.asarray(rep_ids)
    player_ids = np.asarray(player_ids)
    return rng.stream_keys(seed, rng.TAG_NOISE,
                           rep_ids[:, None], player_ids[None, :])


def initial_states(model: ModelSpec, seed: int, rep_ids, player_ids) -> np.ndarray:
    keys = rng.stream_keys(seed, rng.TAG_INIT,
                           np.asarray(rep_ids)[:, None],
                           np.asarray(player_ids)[None, :])
    u = rng.uniforms(keys, 0)
    return model.initial_law.from_uniform(u)


def _check_actions(model: ModelSpec, a, step: int) -> None:
    lo = model.actions.lo.min() - 1e-12
    hi = model.actions.hi.max() + 1e-12
    a = np.asarray(a)
    if np.any(a < lo) or np.any(a > hi):
        raise ValueError(f"action outside the admissible box at step {step}")


def _euler(model: ModelSpec, grid: TimeGrid, x0: np.ndarray, w: np.ndarray,
           action_fn: Callable, measure_fn: Callable) -> np.ndarray:
    """Shared Euler loop.  ``w``: Brownian paths with shape
    ``x0.shape + (steps+1,)``; ``measure_fn(i, x)`` returns the time-t view."""
    steps = grid.steps
    dt = grid.dt
    times = grid.times
    x = np.empty(x0.shape + (steps + 1,))
    x[..., 0] = x0
    for i in range(steps):
        xi = x[..., i]
        mv = measure_fn(i, xi)
        a = action_fn(times[i], xi, mv)
        _check_actions(model, a, i)
        drift = model.drift(times[i], xi, mv, a)
        x[..., i + 1] = xi + np.asarray(drift) * dt + (w[..., i + 1] - w[..., i])
        if not np.all(np.isfinite(x[..., i + 1])):
            raise SimulationError(i)
    return x


def _empirical_measure(i: int, x: np.ndarray) -> MeasureView:
    """Per-replication empirical view over the player axis (last axis)."""
    return MeasureView(mean=x.mean(axis=-1, keepdims=True),
                       second_moment=np.mean(x**2, axis=-1, keepdims=True))


def simulate_ensemble(model: ModelSpec, grid: TimeGrid, actions, N: int,
                      reps: int, seed: int, rep_offset: int = 0) -> np.ndarray:
    """Simulate ``reps`` independent N-player replications.

    ``actions``: array broadcastable to (reps, N) of constant actions, or a
    callable rule (t, x, mview) -> (reps, N) applied to all players.
    Returns states of shape (reps, N, steps+1).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    rep_ids = rep_offset + np.arange(reps)
    player_ids = np.arange(N)
    w = backend.brownian_paths(noise_keys(seed, rep_ids, player_ids),
                               grid.steps, grid.horizon)
    x0 = initial_states(model, seed, rep_ids, player_ids)
    if callable(actions):
        action_fn = actions
    else:
        const = np.broadcast_to(np.asarray(actions, dtype=np.float64), (reps, N))
        _check_actions(model, const, 0)

        def action_fn(t, x, mv, _c=const):
            return _c

    return _euler(model, grid, x0, w, action_fn, _empirical_measure)


def simulate_n_player(model: ModelSpec, grid: TimeGrid, strategies, N: int,
                      seed: int, scenario_index: int = 0,
                      rep: int = 0) -> SimulationBatch:
    """One replication of the N-player system under per-player strategies.

    ``strategies``: one rule for all players, or a length-N sequence of
    rules/constants.  The rules see the synchronously updated empirical
    measure of the current states.
    """
    if isinstance(strategies, Sequence) and not isinstance(strategies, str):
        if len(strategies) != N:
            raise ValueError("need one strategy per player")
        fns = [as_action_fn(s) for s in strategies]

        def action_fn(t, x, mv):
            return np.stack([np.broadcast_to(f(t, x[:, j], mv), x[:, j].shape)
                             for j, f in enumerate(fns)], axis=1)
    else:
        action_fn = as_action_fn(strategies)

    recorded = []

    def recording_fn(t, x, mv):
        a = np.broadcast_to(action_fn(t, x, mv), x.shape)
        recorded.append(np.array(a[0]))
        return a

    rep_ids = np.array([rep])
    player_ids = np.arange(N)
    w = backend.brownian_paths(noise_keys(seed, rep_ids, player_ids),
                               grid.steps, grid.horizon)
    x0 = initial_states(model, seed, rep_ids, player_ids)
    x = _euler(model, grid, x0, w, recording_fn, _empirical_measure)
    return SimulationBatch(paths=x[0], actions=np.stack(recorded, axis=1),
                           noise_seed=seed, scenario_index=scenario_index)


def simulate_representative(model: ModelSpec, grid: TimeGrid, flow,
                            strategy, reps: int, seed: int,
                            rep_offset: int = 0) -> np.ndarray:
    """Independent replications of the single SDE against an exogenous flow.

    Returns paths of shape (reps, steps+1).  Replication r uses the same
    noise stream as player 0 of replication r in the N-player engine, which
    is what makes common-random-number comparisons possible.
    """
    rep_ids = rep_offset + np.arange(reps)
    w = backend.brownian_paths(noise_keys(seed, rep_ids, [0]),
                               grid.steps, grid.horizon)[:, 0, :]
    x0 = initial_states(model, seed, rep_ids, [0])[:, 0]
    views = [flow.view(t) for t in grid.times[:-1]]
    action_fn = as_action_fn(strategy)
    return _euler(model, grid, x0, w, action_fn, lambda i, x: views[i])


@dataclass(frozen=True)
class MkvResult:
    """Particle fixed point plus its convergence trace."""

    flow: ParticleFlow
    distances: list
    converged: bool
    iterations: int


def mckean_vlasov_fixed_point(model: ModelSpec, grid: TimeGrid, strategy,
                              particles: int, max_iters: int, tol: float,
                              seed: int) -> MkvResult:
    """Picard iteration on particle flows for the McKean-Vlasov dynamics.

    Each iteration simulates the particle cloud against the current flow
    (with the same noise every time) and replaces the flow by the resulting
    empirical flow, until the sup-in-time W2 between successive flows drops
    below ``tol``.  Non-convergence is flagged, not fatal.
    """
    if particles < 100:
        raise ValueError("need at least 100 particles")
    if not tol > 0:
        raise ValueError("tol must be positive")
    times = grid.times
    rep_ids = np.arange(particles)
    w = backend.brownian_paths(noise_keys(seed, rep_ids, [0]),
                               grid.steps, grid.horizon)[:, 0, :]
    x0 = initial_states(model, seed, rep_ids, [0])[:, 0]
    flow = ParticleFlow(times=times,
                        particles=np.repeat(x0[:, None], grid.steps + 1, axis=1))
    action_fn = as_action_fn(strategy)

    distances = []
    converged = False
    for _ in range(max_iters):
        views = [flow.view(t) for t in times[:-1]]
        x = _euler(model, grid, x0, w, action_fn, lambda i, s: views[i])
        new_flow = ParticleFlow(times=times, particles=x)
        gap = float(np.max(np.sqrt(np.mean(
            (np.sort(x, axis=0) - flow._sorted) ** 2, axis=0))))
        distances.append(gap)
        flow = new_flow
        if gap < tol:
            converged = True
            break
    return MkvResult(flow=flow, distances=distances, converged=converged,
                     iterations=len(distances))

"""Cost estimation and deviation-gap estimation.

The deviation family is a grid of constant actions: in the shipped
instance any open-loop deviation influences the payoff only through the
mean of its time integral (plus the 1/N self term at finite N), both of
which are extremized by constants.  For general models the reported gap is
therefore a lower bound on the true one.

All candidates within one replication share that replication's noise
(common random numbers), which is what makes the per-replication deviation
payoff an exact quadratic in the candidate action for the shipped model.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import backend, rng
from .correlation import CorrelationDevice
from .engine import (SimulationBatch, TimeGrid, _euler, as_action_fn,
                     initial_states, noise_keys)
from .model import MeasureView, ModelSpec

CHUNK_ELEMS = 20_000_000     # cap on states held in memory per chunk


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_error: float
    reps: int
    flagged: bool = False     # True when reps < 2 (no standard error)


@dataclass(frozen=True)
class GapReport:
    """Deviation-gap estimate with its grid of candidates.

    ``raw_gap`` is the sense-adjusted improvement of the best candidate
    over the recommendation (may be negative at an equilibrium, which is
    Monte Carlo noise); ``epsilon_hat`` clips it at zero.
    """

    j_rec: CostEstimate
    best_deviation: float
    j_dev_best: CostEstimate
    epsilon_hat: float
    epsilon_ci: tuple
    raw_gap: float
    raw_se: float
    candidates: np.ndarray
    improvement_means: np.ndarray
    improvement_ses: np.ndarray
    oracle: Optional[float] = None


def default_deviation_grid(model: ModelSpec, size: int = 21) -> np.ndarray:
    if size < 3:
        raise ValueError("deviation grid needs at least 3 candidates")
    return np.linspace(model.actions.lo.min(), model.actions.hi.max(), size)


def _chunks(total: int, chunk: int):
    off = 0
    while off < total:
        yield off, min(chunk, total - off)
        off += chunk


def _map_jobs(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def default_workers() -> int:
    return int(os.environ.get("CCEMFG_WORKERS", "1"))


def _player_cost(model: ModelSpec, grid: TimeGrid, xp: np.ndarray,
                 ap: np.ndarray, means: np.ndarray, m2s: np.ndarray) -> np.ndarray:
    """Cost of one player across replications.

    xp: (R, steps+1) states; ap: (R,) constant or (R, steps) actions;
    means/m2s: (R, steps+1) measure summaries seen by that player.
    """
    times = grid.times
    run = np.zeros(xp.shape[0])
    for i in range(grid.steps):
        mv = MeasureView(mean=means[:, i], second_moment=m2s[:, i])
        a_i = ap[:, i] if ap.ndim == 2 else ap
        run = run + np.asarray(model.running_cost(times[i], xp[:, i], mv, a_i))
    mv_T = MeasureView(mean=means[:, -1], second_moment=m2s[:, -1])
    return run * grid.dt + np.asarray(model.terminal_cost(xp[:, -1], mv_T))


def estimate_cost(model: ModelSpec, grid: TimeGrid, batches,
                  player: int = 0) -> CostEstimate:
    """Monte Carlo cost of one player over one or more simulation batches
    (left-endpoint Riemann sum of the running cost plus terminal cost,
    against the batch's empirical measure)."""
    if isinstance(batches, SimulationBatch):
        batches = [batches]
    vals = []
    for b in batches:
        x = np.asarray(b.paths)                       # (N, steps+1)
        means = x.mean(axis=0, keepdims=True)
        m2s = np.mean(x**2, axis=0, keepdims=True)
        ap = np.asarray(b.actions)[player][None, :]
        vals.append(float(_player_cost(model, grid, x[player][None, :],
                                       ap, means, m2s)[0]))
    vals = np.asarray(vals)
    n = vals.size
    if n < 2:
        return CostEstimate(mean=float(vals.mean()), std_error=float("nan"),
                            reps=n, flagged=True)
    return CostEstimate(mean=float(vals.mean()),
                        std_error=float(vals.std(ddof=1) / np.sqrt(n)),
                        reps=n)


# ---------------------------------------------------------------------------
# recommendation sampling for the N-player game
# ---------------------------------------------------------------------------

def _constant_of(strategy) -> float:
    from .engine import ConstantStrategy

    if isinstance(strategy, ConstantStrategy):
        return float(strategy.value)
    if np.isscalar(strategy):
        return float(strategy)
    raise NotImplementedError(
        "N-player recommendation sampling supports constant strategies only")


def recommended_actions(device: CorrelationDevice, seed: int, rep_ids,
                        N: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-(replication, player) recommended constant actions.

    Each replication draws a scenario from the lottery, which fixes the
    flow class; the players' strategies are then conditionally i.i.d. from
    that class's strategy distribution, mirroring the construction of
    N-player recommendations from a mean field device.

    Returns (actions (R, N), flow-class index per replication (R,)).
    """
    rep_ids = np.asarray(rep_ids)
    classes = device.flow_classes()
    labels = list(classes)
    scen_to_class = np.empty(len(device.scenarios), dtype=np.int64)
    for ci, lab in enumerate(labels):
        for si in classes[lab]["scenarios"]:
            scen_to_class[si] = ci

    key = rng.stream_key(seed, rng.TAG_SCENARIO)
    u_rep = rng.uniforms(key, rep_ids)
    edges = np.cumsum([s.probability for s in device.scenarios])
    edges[-1] = 1.0 + 1e-15
    scen = np.searchsorted(edges, u_rep, side="right")
    cls = scen_to_class[scen]

    rec_keys = rng.stream_keys(seed, rng.TAG_RECOMMEND, rep_ids)
    u = rng.uniforms(rec_keys[:, None], np.arange(N)[None, :])

    actions = np.empty((rep_ids.size, N))
    for ci, lab in enumerate(labels):
        mask = cls == ci
        if not np.any(mask):
            continue
        scens = classes[lab]["scenarios"]
        probs = np.array([device.scenarios[s].probability for s in scens])
        probs = probs / probs.sum()
        values = np.array([_constant_of(device.scenarios[s].strategy)
                           for s in scens])
        cum = np.cumsum(probs)
        cum[-1] = 1.0 + 1e-15
        pick = np.searchsorted(cum, u[mask], side="right")
        actions[mask] = values[pick]
    return actions, cls


# ---------------------------------------------------------------------------
# N-player gap
# ---------------------------------------------------------------------------

def _nplayer_chunk(args):
    (model, device, grid, N, seed, candidates, off, count) = args
    rep_ids = off + np.arange(count)
    actions, cls = recommended_actions(device, seed, rep_ids, N)

    w = backend.brownian_paths(noise_keys(seed, rep_ids, np.arange(N)),
                               grid.steps, grid.horizon)
    x0 = initial_states(model, seed, rep_ids, np.arange(N))

    def const_fn(t, x, mv, _a=actions):
        return _a

    from .engine import _empirical_measure

    x = _euler(model, grid, x0, w, const_fn, _empirical_measure)
    sums = x.sum(axis=1)                  # (R, steps+1)
    sq_sums = np.sum(x**2, axis=1)

    j_rec = _player_cost(model, grid, x[:, 0, :], actions[:, 0],
                         sums / N, sq_sums / N)

    G = candidates.shape[0]
    j_dev = np.empty((count, G))
    if not model.drift_uses_measure:
        j_dev[:] = _deviations_fast(model, grid, N, candidates,
                                    x[:, 0, :], w[:, 0, :], x0[:, 0],
                                    sums, sq_sums)
    else:
        for g, m in enumerate(candidates):
            dev_actions = actions.copy()
            dev_actions[:, 0] = m

            def dev_fn(t, xx, mv, _a=dev_actions):
                return _a

            xd = _euler(model, grid, x0, w, dev_fn, _empirical_measure)
            s1 = xd.sum(axis=1)
            s2 = np.sum(xd**2, axis=1)
            j_dev[:, g] = _player_cost(model, grid, xd[:, 0, :],
                                       np.full(count, m), s1 / N, s2 / N)
    return j_rec, j_dev, cls


def _deviations_fast(model, grid, N, candidates, x0_rec, w0, x0_init,
                     sums, sq_sums):
    """Deviation payoffs when the drift ignores the measure: only player 0
    is re-simulated, and the empirical summaries are patched in place."""
    count = x0_rec.shape[0]
    times = grid.times
    dt = grid.dt
    out = np.empty((count, candidates.shape[0]))
    for g, m in enumerate(candidates):
        a = np.full(count, m)
        xd = np.empty_like(x0_rec)
        xd[:, 0] = x0_init
        run = np.zeros(count)
        for i in range(grid.steps):
            mean_i = (sums[:, i] - x0_rec[:, i] + xd[:, i]) / N
            m2_i = (sq_sums[:, i] - x0_rec[:, i]**2 + xd[:, i]**2) / N
            mv = MeasureView(mean=mean_i, second_moment=m2_i)
            run = run + np.asarray(model.running_cost(times[i], xd[:, i], mv, a))
            drift = np.asarray(model.drift(times[i], xd[:, i], mv, a))
            xd[:, i + 1] = xd[:, i] + drift * dt + (w0[:, i + 1] - w0[:, i])
        mean_T = (sums[:, -1] - x0_rec[:, -1] + xd[:, -1]) / N
        m2_T = (sq_sums[:, -1] - x0_rec[:, -1]**2 + xd[:, -1]**2) / N
        mv_T = MeasureView(mean=mean_T, second_moment=m2_T)
        out[:, g] = run * dt + np.asarray(model.terminal_cost(xd[:, -1], mv_T))
    return out


def _assemble_gap(model, j_rec, j_dev, candidates, oracle=None) -> GapReport:
    adj = model.sign
    imp = adj * (j_rec[:, None] - j_dev)          # (R, G) improvements
    reps = j_rec.shape[0]
    imp_means = imp.mean(axis=0)
    imp_ses = imp.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 \
        else np.full(candidates.shape, np.nan)
    best = int(np.argmax(imp_means))
    raw = float(imp_means[best])
    se = float(imp_ses[best]) if reps > 1 else float("nan")
    half = 1.96 * se if np.isfinite(se) else float("nan")
    flagged = reps < 2

    def est(v):
        return CostEstimate(mean=float(v.mean()),
                            std_error=float(v.std(ddof=1) / np.sqrt(reps))
                            if reps > 1 else float("nan"),
                            reps=reps, flagged=flagged)

    return GapReport(j_rec=est(j_rec),
                     best_deviation=float(candidates[best]),
                     j_dev_best=est(j_dev[:, best]),
                     epsilon_hat=max(0.0, raw),
                     epsilon_ci=(raw - half, raw + half),
                     raw_gap=raw, raw_se=se,
                     candidates=candidates,
                     improvement_means=imp_means,
                     improvement_ses=imp_ses,
                     oracle=oracle)


def cce_gap_nplayer(model: ModelSpec, device: CorrelationDevice, N: int,
                    deviations=21, reps: int = 2000, seed: int = 0,
                    grid: Optional[TimeGrid] = None, workers: int = 0,
                    oracle: Optional[float] = None) -> GapReport:
    """Deviation gap of player 1 in the N-player game under the device.

    By symmetry only player 1 (index 0) deviates.  The G constant-action
    candidates reuse each replication's noise; when the model's drift is
    measure-free only the deviator's path is re-simulated.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    grid = grid or TimeGrid(model.horizon, 200)
    candidates = (default_deviation_grid(model, deviations)
                  if np.isscalar(deviations) else np.asarray(deviations,
                                                            dtype=np.float64))
    if candidates.size < 3:
        raise ValueError("deviation grid needs at least 3 candidates")
    workers = workers or default_workers()
    chunk = max(1, CHUNK_ELEMS // (N * (grid.steps + 1)))
    jobs = [(model, device, grid, N, seed, candidates, off, cnt)
            for off, cnt in _chunks(reps, chunk)]
    parts = _map_jobs(_nplayer_chunk, jobs, workers)
    j_rec = np.concatenate([p[0] for p in parts])
    j_dev = np.concatenate([p[1] for p in parts])
    return _assemble_gap(model, j_rec, j_dev, candidates, oracle=oracle)


# ---------------------------------------------------------------------------
# mean field gap
# ---------------------------------------------------------------------------

def _mf_chunk(args):
    (model, device, grid, seed, candidates, off, count) = args
    rep_ids = off + np.arange(count)
    key = rng.stream_key(seed, rng.TAG_SCENARIO)
    u = rng.uniforms(key, rep_ids)
    edges = np.cumsum([s.probability for s in device.scenarios])
    edges[-1] = 1.0 + 1e-15
    scen = np.searchsorted(edges, u, side="right")

    w = backend.brownian_paths(noise_keys(seed, rep_ids, [0]),
                               grid.steps, grid.horizon)[:, 0, :]
    x0 = initial_states(model, seed, rep_ids, [0])[:, 0]

    j_rec = np.empty(count)
    j_dev = np.empty((count, candidates.shape[0]))
    for idx, scenario in enumerate(device.scenarios):
        mask = scen == idx
        if not np.any(mask):
            continue
        flow = scenario.flow
        views = [flow.view(t) for t in grid.times[:-1]]
        vT = flow.view(grid.times[-1])
        means = np.array([v.mean for v in views] + [vT.mean])
        m2s = np.array([v.second_moment for v in views] + [vT.second_moment])
        means = np.broadcast_to(means, (int(mask.sum()), means.shape[0]))
        m2s = np.broadcast_to(m2s, means.shape)

        fn = as_action_fn(scenario.strategy)
        rec = []

        def rec_fn(t, xx, mv, _f=fn, _rec=rec):
            a = np.broadcast_to(_f(t, xx, mv), np.shape(xx))
            _rec.append(np.array(a))
            return a

        x = _euler(model, grid, x0[mask], w[mask], rec_fn,
                   lambda i, s, _v=views: _v[i])
        a_rec = np.stack(rec, axis=1)                 # (Rc, steps)
        j_rec[mask] = _player_cost(model, grid, x, a_rec, means, m2s)

        for g, m in enumerate(candidates):
            xd = _euler(model, grid, x0[mask], w[mask],
                        as_action_fn(float(m)), lambda i, s, _v=views: _v[i])
            j_dev[mask, g] = _player_cost(model, grid, xd,
                                          np.full(int(mask.sum()), m),
                                          means, m2s)
    return j_rec, j_dev, scen


def mean_field_gap_mc(model: ModelSpec, device: CorrelationDevice,
                      deviations=21, reps: int = 4000, seed: int = 0,
                      grid: Optional[TimeGrid] = None, workers: int = 0,
                      oracle: Optional[float] = None) -> GapReport:
    """Deviation gap of the representative player against the device's
    exogenous flows (mean field optimality check)."""
    grid = grid or TimeGrid(model.horizon, 200)
    candidates = (default_deviation_grid(model, deviations)
                  if np.isscalar(deviations) else np.asarray(deviations,
                                                            dtype=np.float64))
    workers = workers or default_workers()
    chunk = max(1, CHUNK_ELEMS // (candidates.size * (grid.steps + 1)))
    jobs = [(model, device, grid, seed, candidates, off, cnt)
            for off, cnt in _chunks(reps, chunk)]
    parts = _map_jobs(_mf_chunk, jobs, workers)
    j_rec = np.concatenate([p[0] for p in parts])
    j_dev = np.concatenate([p[1] for p in parts])
    return _assemble_gap(model, j_rec, j_dev, candidates, oracle=oracle)


# ---------------------------------------------------------------------------
# propagation of chaos
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PocResult:
    """Decay of sup_t E[W2^2(empirical, declared flow)] in N."""

    Ns: tuple
    overall: np.ndarray                 # (len(Ns),)
    per_class: dict                     # label -> (len(Ns),)
    per_time: dict                      # N -> (steps+1,) mean W2^2 curves


def _poc_for_n(args):
    (model, device, grid, N, reps, seed) = args
    tables = {lab: entry["flow"].quantile_table(grid.times)
              for lab, entry in device.flow_classes().items()}
    labels = list(tables)

    chunk = max(1, CHUNK_ELEMS // (N * (grid.steps + 1)))
    from .engine import _empirical_measure

    d2_sum = np.zeros(grid.steps + 1)
    class_sum = {lab: np.zeros(grid.steps + 1) for lab in labels}
    class_cnt = {lab: 0 for lab in labels}
    total = 0
    for off, cnt in _chunks(reps, chunk):
        rep_ids = off + np.arange(cnt)
        actions, cls = recommended_actions(device, seed, rep_ids, N)
        w = backend.brownian_paths(noise_keys(seed, rep_ids, np.arange(N)),
                                   grid.steps, grid.horizon)
        x0 = initial_states(model, seed, rep_ids, np.arange(N))
        x = _euler(model, grid, x0, w,
                   lambda t, s, mv, _a=actions: _a, _empirical_measure)
        xs = np.sort(x, axis=1)                        # (R, N, T)
        n_pts = tables[labels[0]].shape[1]
        q_idx = np.minimum(((np.arange(n_pts) + 0.5) / n_pts * N).astype(np.int64),
                           N - 1)
        eq = xs[:, q_idx, :]                           # (R, 512, T)
        for ci, lab in enumerate(labels):
            mask = cls == ci
            if not np.any(mask):
                continue
            diff2 = (eq[mask] - tables[lab].T[None]) ** 2
            d2 = diff2.mean(axis=1)                    # (Rc, T)
            class_sum[lab] += d2.sum(axis=0)
            class_cnt[lab] += int(mask.sum())
            d2_sum += d2.sum(axis=0)
        total += cnt
    per_time = d2_sum / total
    per_class = {lab: (class_sum[lab] / class_cnt[lab]
                       if class_cnt[lab] else np.full(grid.steps + 1, np.nan))
                 for lab in labels}
    return per_time, per_class


def poc_curve(model: ModelSpec, device: CorrelationDevice,
              Ns: Sequence[int], reps: int = 200, seed: int = 0,
              grid: Optional[TimeGrid] = None, workers: int = 0) -> PocResult:
    """sup_t of the replication-averaged squared W2 between the empirical
    measure flow and the scenario's declared flow, for each N."""
    if list(Ns) != sorted(Ns):
        raise ValueError("Ns must be increasing")
    grid = grid or TimeGrid(model.horizon, 200)
    workers = workers or default_workers()
    jobs = [(model, device, grid, int(N), reps, seed) for N in Ns]
    parts = _map_jobs(_poc_for_n, jobs, workers)
    overall = np.array([float(np.max(pt)) for pt, _ in parts])
    labels = list(device.flow_classes())
    per_class = {lab: np.array([float(np.nanmax(pc[lab])) for _, pc in parts])
                 for lab in labels}
    per_time = {int(N): parts[i][0] for i, N in enumerate(Ns)}
    return PocResult(Ns=tuple(int(N) for N in Ns), overall=overall,
                     per_class=per_class, per_time=per_time)

"""Finite correlation devices: the mediator's lottery over (strategy, flow)
pairs, recommendation sampling, and verification of the consistency
condition by conditioning on the realized flow.

Conditioning on the flow is implemented as grouping by flow label, which is
valid precisely because every shipped device has finitely many distinct
flows; devices with a continuum of flows are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .analytic import DeviceProbs, consistency_weights
from .engine import TimeGrid, as_action_fn, simulate_representative
from .flows import GaussianMixtureFlow, device_flow
from .metrics import empirical_quantiles
from .model import ModelSpec

PROB_TOL = 1e-12


@dataclass(frozen=True)
class Scenario:
    probability: float
    strategy: object             # action rule or constant
    flow: object                 # measure flow carrying a .label
    label: str = ""


@dataclass(frozen=True)
class CorrelationDevice:
    scenarios: tuple

    def __post_init__(self):
        if len(self.scenarios) == 0:
            raise ValueError("device needs at least one scenario")
        probs = np.array([s.probability for s in self.scenarios])
        if np.any(probs < -PROB_TOL):
            raise ValueError("scenario probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("scenario probabilities must sum to 1")
        object.__setattr__(self, "scenarios", tuple(self.scenarios))

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([s.probability for s in self.scenarios])

    def flow_classes(self) -> dict:
        """Distinct flows with their total probability and scenario indices,
        keyed by flow label, in first-appearance order."""
        classes: dict = {}
        for idx, s in enumerate(self.scenarios):
            lab = getattr(s.flow, "label", "") or str(id(s.flow))
            entry = classes.setdefault(lab, {"flow": s.flow, "probability": 0.0,
                                             "scenarios": []})
            entry["probability"] += s.probability
            entry["scenarios"].append(idx)
        return classes


def build_example_device(p: DeviceProbs, a: float, b: float) -> CorrelationDevice:
    """The four-outcome device of the bang-bang instance.

    Pairs the constant controls b / a with the two consistent mixture
    flows; outcomes with zero probability are dropped, so corner devices
    degenerate to a single scenario.
    """
    if not a < 0.0 < b:
        raise ValueError("need a < 0 < b")
    a1, a2 = consistency_weights(p)
    flows = {}
    if a1 is not None:
        flows[1] = device_flow(a1, a, b, label="mu1")
    if a2 is not None:
        flows[2] = device_flow(a2, a, b, label="mu2")
    table = [("u+", b, 1, p.p11), ("u+", b, 2, p.p12),
             ("u-", a, 1, p.p21), ("u-", a, 2, p.p22)]
    scenarios = []
    for strat_label, action, col, prob in table:
        if prob <= 0.0:
            continue
        scenarios.append(Scenario(probability=prob, strategy=float(action),
                                  flow=flows[col],
                                  label=f"({strat_label},mu{col})"))
    return CorrelationDevice(scenarios=tuple(scenarios))


def sample_scenario(device: CorrelationDevice, seed: int,
                    count: int) -> np.ndarray:
    """i.i.d. scenario indices from the lottery (dedicated counter stream)."""
    if count < 1:
        raise ValueError("count must be at least 1")
    key = rng.stream_key(seed, rng.TAG_SCENARIO)
    u = rng.uniforms(key, np.arange(count))
    edges = np.cumsum(device.probabilities)
    edges[-1] = 1.0 + 1e-15
    return np.searchsorted(edges, u, side="right").astype(np.int64)


@dataclass(frozen=True)
class ClassReport:
    label: str
    probability: float
    count: int
    times: np.ndarray
    w2: np.ndarray
    flagged: bool = False        # fewer than 100 pooled samples

    @property
    def sup_w2(self) -> float:
        return float(np.max(self.w2))


@dataclass(frozen=True)
class ConsistencyReport:
    classes: tuple
    reps: int
    seed: int

    def to_csv(self, path, header=None) -> None:
        import json

        with open(path, "w") as fh:
            if header is not None:
                fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            fh.write("class,prob,count,t,w2\n")
            for cl in self.classes:
                for t, d in zip(cl.times, cl.w2):
                    fh.write(f"{cl.label},{cl.probability:.17g},{cl.count},"
                             f"{t:.17g},{d:.17g}\n")


def verify_consistency(model: ModelSpec, device: CorrelationDevice,
                       grid: TimeGrid, reps: int, seed: int) -> ConsistencyReport:
    """Compare, per flow class and per time, the pooled law of the
    representative state against the declared flow (1-d W2).

    Each replication draws a scenario, then simulates the representative
    player following the recommended strategy against the scenario's flow;
    paths are pooled by flow class.  A positive-probability class with no
    samples raises; classes with fewer than 100 samples are flagged.
    """
    draws = sample_scenario(device, seed, reps)
    times = grid.times
    classes = device.flow_classes()

    # simulate scenario groups separately (replication ids stay global, so
    # results are independent of the grouping order)
    paths_by_scenario = {}
    for idx, scenario in enumerate(device.scenarios):
        rep_ids = np.nonzero(draws == idx)[0]
        if rep_ids.size == 0:
            continue
        w_ids = rep_ids
        # simulate only the selected replications; rep ids address streams
        paths = _simulate_selected(model, grid, scenario, w_ids, seed)
        paths_by_scenario[idx] = paths

    reports = []
    for label, entry in classes.items():
        pooled = [paths_by_scenario[i] for i in entry["scenarios"]
                  if i in paths_by_scenario]
        if not pooled:
            if entry["probability"] > 0:
                raise ValueError(f"flow class {label} received no samples; "
                                 "increase reps")
            continue
        pool = np.concatenate(pooled, axis=0)
        w2 = _pooled_w2_vs_flow(pool, entry["flow"], times)
        reports.append(ClassReport(label=label,
                                   probability=float(entry["probability"]),
                                   count=int(pool.shape[0]), times=times,
                                   w2=w2, flagged=pool.shape[0] < 100))
    return ConsistencyReport(classes=tuple(reports), reps=reps, seed=seed)


def _simulate_selected(model, grid, scenario, rep_ids, seed):
    """Representative simulation restricted to the given replication ids."""
    from . import backend
    from .engine import _euler, initial_states, noise_keys

    w = backend.brownian_paths(noise_keys(seed, rep_ids, [0]),
                               grid.steps, grid.horizon)[:, 0, :]
    x0 = initial_states(model, seed, rep_ids, [0])[:, 0]
    views = [scenario.flow.view(t) for t in grid.times[:-1]]
    action_fn = as_action_fn(scenario.strategy)
    return _euler(model, grid, x0, w, action_fn, lambda i, x: views[i])


def _pooled_w2_vs_flow(pool: np.ndarray, flow, times: np.ndarray) -> np.ndarray:
    """Per-time W2 between pooled samples (R, T) and an analytic flow."""
    if isinstance(flow, GaussianMixtureFlow):
        table = flow.quantile_table(times)            # (T, 512)
        sorted_pool = np.sort(pool, axis=0)           # (R, T)
        eq = empirical_quantiles(sorted_pool.T)       # (T, 512)
        return np.sqrt(np.mean((eq - table) ** 2, axis=1))
    # particle reference flow: order-statistics coupling per time
    out = np.empty(times.shape[0])
    for i, t in enumerate(times):
        ref = flow.sorted_at(t)
        eq = empirical_quantiles(np.sort(pool[:, i]), ref.shape[0])
        out[i] = np.sqrt(np.mean((eq - ref) ** 2))
    return out


def strategy_flow_marginals(device: CorrelationDevice):
    """(strategy marginal, flow marginal) as label -> probability dicts."""
    strat: dict = {}
    flow: dict = {}
    for s in device.scenarios:
        s_lab = s.label.split(",")[0].strip("(") if s.label else str(s.strategy)
        strat[s_lab] = strat.get(s_lab, 0.0) + s.probability
        f_lab = getattr(s.flow, "label", "") or str(id(s.flow))
        flow[f_lab] = flow.get(f_lab, 0.0) + s.probability
    return strat, flow


def null_band(flow: GaussianMixtureFlow, times: np.ndarray, count: int,
              seed: int, pilots: int = 20, factor: float = 3.0) -> float:
    """Pilot-calibrated threshold for sup-t W2 under the null (samples drawn
    from the flow itself).  Returns ``factor`` times the pilot median."""
    table = flow.quantile_table(times)
    sups = []
    for p in range(pilots):
        key = rng.stream_key(seed, rng.TAG_PROBE, p)
        u = rng.uniforms(key, np.arange(count * times.shape[0]))
        u = u.reshape(count, times.shape[0])
        # inverse-CDF sampling straight from the quantile table
        idx = np.minimum((u * table.shape[1]).astype(np.int64), table.shape[1] - 1)
        samples = table[np.arange(times.shape[0])[None, :], idx]
        eq = empirical_quantiles(np.sort(samples, axis=0).T)
        sups.append(float(np.max(np.sqrt(np.mean((eq - table) ** 2, axis=1)))))
    return factor * float(np.median(sups))

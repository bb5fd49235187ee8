"""Incremental pulse re-seeding: searching for the shortest viable duration.

Each fixed-duration optimization seeds the next one with a refitted
(truncated or extended) copy of its pulse instead of a fresh random guess:

* success at T: remember it as the best duration, step down, and re-seed
  with the truncated pulse;
* failure after some success: halve the step and work downwards from the
  best duration again, stopping once the step would drop below the
  granularity;
* failure before any success with improving fidelity: extend the duration
  and re-seed with the stretched pulse;
* failure before any success with decreasing fidelity: restart from the
  best-fidelity duration with a fresh random guess (bounded number of
  restarts).

The optimizer is injected as a callable so the state machine can be driven
by mocks in tests.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .model import GateSpec, QuditSystem
from .objective import ObjectiveConfig
from .optimize import OptResult, minimize
from .pulse import PulseParams, default_params, random_guess, refit

THREADS_ENV_VAR = "QUDITPULSE_THREADS"

Optimizer = Callable[[QuditSystem, PulseParams, GateSpec], OptResult]


@dataclass(frozen=True)
class IPRConfig:
    """Search parameters for one incremental re-seeding run."""

    T_start: float
    step: float | None = None  # default: power of two nearest 0.1*T_start
    granularity: float = 1.0
    guess_scale: float = 0.01
    max_restarts: int = 5
    max_attempts: int = 200  # safety budget; the flowchart alone need not terminate
    error_threshold: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.T_start <= 0:
            raise ValueError("T_start must be positive")
        if self.granularity <= 0:
            raise ValueError("granularity must be positive")
        if self.step is not None and self.step < self.granularity:
            raise ValueError("step must be at least the granularity")
        if self.max_restarts < 0 or self.max_attempts < 1:
            raise ValueError("invalid restart/attempt budget")


@dataclass(frozen=True)
class IPRRecord:
    """One optimizer attempt in the search."""

    index: int
    T: float
    fidelity: float
    success: bool
    seed_kind: str  # random | truncated | extended
    step_at_attempt: float


@dataclass
class IPRResult:
    """Final state of a search: best duration found and the attempt ledger."""

    T_best: float | None
    alpha_best: np.ndarray | None
    fidelity_best: float
    records: list[IPRRecord] = field(default_factory=list)
    restarts_used: int = 0

    @property
    def succeeded(self) -> bool:
        return self.T_best is not None


def nearest_power_of_two_step(T_start: float, granularity: float = 1.0) -> float:
    """Default duration step: the power of two nearest to 0.1*T_start."""
    x = 0.1 * T_start
    if x <= 1.0:
        step = 1.0
    else:
        lo = 2.0 ** math.floor(math.log2(x))
        hi = 2.0 * lo
        step = hi if (x - lo) >= (hi - x) else lo
    return max(step, granularity)


def _snap(x: float, granularity: float) -> float:
    return math.floor(x / granularity + 0.5) * granularity


def _halve_step(step: float, granularity: float) -> float | None:
    units = math.floor(step / (2.0 * granularity) + 1e-9)
    return units * granularity if units >= 1 else None


def _next_lower(t_best: float, step: float, granularity: float):
    """Duration/step for the next attempt below t_best, or None to stop.

    Keeps durations at or above the granularity by halving the step as
    needed.
    """
    while t_best - step < granularity - 1e-9:
        halved = _halve_step(step, granularity)
        if halved is None:
            return None
        step = halved
    return t_best - step, step


def standard_optimizer(
    cfg: ObjectiveConfig | None = None,
    max_iter: int | None = None,
    steps_per_ns: int | None = None,
) -> Optimizer:
    """The real fixed-duration optimizer bound to its configuration."""
    obj_cfg = cfg or ObjectiveConfig()

    def run(sys: QuditSystem, params: PulseParams, target: GateSpec) -> OptResult:
        return minimize(sys, params, target, obj_cfg, max_iter, steps_per_ns)

    return run


def threshold_mock_optimizer(t_threshold: float) -> Optimizer:
    """Mock that succeeds exactly for durations >= t_threshold.

    Below the threshold it reports a fidelity increasing monotonically with
    duration, so the state machine follows its extension branch.
    """

    def run(sys, params, target) -> OptResult:
        if params.T >= t_threshold:
            fid = 0.9995
        else:
            fid = 0.999 * params.T / t_threshold
        return OptResult(
            alpha_final=params.alpha.copy(),
            fidelity=fid,
            objective_history=[1.0 - fid],
            iterations=1,
            converged=params.T >= t_threshold,
        )

    return run


def ipr_run(
    sys: QuditSystem,
    target: GateSpec,
    cfg: IPRConfig,
    optimizer: Optimizer,
) -> IPRResult:
    """Run the incremental re-seeding search for one gate."""
    granularity = cfg.granularity
    step = cfg.step if cfg.step is not None else nearest_power_of_two_step(
        cfg.T_start, granularity
    )
    step = _snap(step, granularity)
    t_current = max(_snap(cfg.T_start, granularity), granularity)

    rng = np.random.default_rng(cfg.seed)
    params = default_params(sys, t_current)
    params = params.with_alpha(random_guess(params, cfg.guess_scale, rng))
    seed_kind = "random"

    records: list[IPRRecord] = []
    t_best: float | None = None
    best_params: PulseParams | None = None
    fidelity_at_best = 0.0
    prev_fidelity: float | None = None
    best_failed_t = t_current
    restarts = 0

    while len(records) < cfg.max_attempts:
        result = optimizer(sys, params, target)
        fidelity = result.fidelity
        success = fidelity >= 1.0 - cfg.error_threshold
        records.append(
            IPRRecord(len(records), t_current, fidelity, success, seed_kind, step)
        )

        if success:
            t_best = t_current
            best_params = params.with_alpha(result.alpha_final)
            fidelity_at_best = fidelity
            nxt = _next_lower(t_best, step, granularity)
            if nxt is None:
                break
            t_current, step = nxt
            params = refit(best_params, t_current)
            seed_kind = "truncated"
        elif t_best is not None:
            halved = _halve_step(step, granularity)
            if halved is None:
                break
            nxt = _next_lower(t_best, halved, granularity)
            if nxt is None:
                break
            t_current, step = nxt
            params = refit(best_params, t_current)
            seed_kind = "truncated"
        else:
            improved = prev_fidelity is None or fidelity > prev_fidelity
            if improved:
                best_failed_t = t_current
                prev_fidelity = fidelity
                t_current = t_current + step
                params = refit(params.with_alpha(result.alpha_final), t_current)
                seed_kind = "extended"
            else:
                if restarts >= cfg.max_restarts:
                    break
                restarts += 1
                t_current = best_failed_t
                params = default_params(sys, t_current)
                params = params.with_alpha(random_guess(params, cfg.guess_scale, rng))
                seed_kind = "random"
                prev_fidelity = None

    if t_best is None:
        best_fid = max((r.fidelity for r in records), default=0.0)
        return IPRResult(None, None, best_fid, records, restarts)
    return IPRResult(
        t_best, best_params.alpha, fidelity_at_best, records, restarts
    )


@dataclass
class MultiRunResult:
    """Aggregate of several independent searches with sampled start times.

    ``configs[i]`` is the per-run configuration that produced ``results[i]``.
    """

    results: list[IPRResult]
    configs: list[IPRConfig]
    t_ref: float
    t_min: float | None
    t_mean: float | None
    t_std: float | None
    fidelity_best: float
    pilot: IPRResult | None = None


def _worker_count(n_runs: int) -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    return max(1, min(n_runs, os.cpu_count() or 1))


def multi_run(
    sys: QuditSystem,
    target: GateSpec,
    base_cfg: IPRConfig,
    n_runs: int,
    sample_low: float = 0.8,
    sample_high: float = 1.2,
    t_ref: float | None = None,
    optimizer: Optimizer | None = None,
) -> MultiRunResult:
    """Repeat ipr_run with start times sampled around a reference duration.

    ``t_ref`` defaults to the outcome of a pilot run at base_cfg.T_start.
    Runs execute concurrently; the summary is computed on results sorted by
    (duration, seed) and is therefore independent of scheduling.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if optimizer is None:
        optimizer = standard_optimizer()

    pilot = None
    if t_ref is None:
        pilot = ipr_run(sys, target, base_cfg, optimizer)
        t_ref = pilot.T_best if pilot.succeeded else base_cfg.T_start

    children = np.random.SeedSequence(base_cfg.seed).spawn(n_runs)
    configs = []
    for child in children:
        rng = np.random.default_rng(child)
        t_start = rng.uniform(sample_low * t_ref, sample_high * t_ref)
        t_start = max(_snap(t_start, base_cfg.granularity), base_cfg.granularity)
        configs.append(
            replace(
                base_cfg,
                T_start=t_start,
                step=None,
                seed=int(child.generate_state(1)[0]),
            )
        )

    with ThreadPoolExecutor(max_workers=_worker_count(n_runs)) as pool:
        results = list(
            pool.map(lambda c: ipr_run(sys, target, c, optimizer), configs)
        )

    order = sorted(
        range(n_runs),
        key=lambda i: (
            results[i].T_best if results[i].succeeded else math.inf,
            configs[i].seed,
        ),
    )
    results = [results[i] for i in order]
    configs = [configs[i] for i in order]

    durations = [r.T_best for r in results if r.succeeded]
    fid_best = max((r.fidelity_best for r in results), default=0.0)
    if durations:
        t_min = float(min(durations))
        t_mean = float(np.mean(durations))
        t_std = float(np.std(durations, ddof=1)) if len(durations) > 1 else 0.0
    else:
        t_min = t_mean = t_std = None
    return MultiRunResult(results, configs, t_ref, t_min, t_mean, t_std, fid_best, pilot)

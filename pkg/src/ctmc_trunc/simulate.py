"""Monte-Carlo trajectory engine over the lazy infinite network.

This is the only module that probes the countable state space directly (no
truncation): states materialize in a cache on first visit.  Trajectories
use counter-based per-trajectory RNG streams keyed by (seed, index), so a
result is bit-identical however trajectories are scheduled.

Estimator layout: jump targets and elapsed time are sampled (exponential
waits drive the horizon clock), while visiting numbers accumulate integer
arrival counts.  Visiting times are derived as counts / exit rate, the
conditional expectation of the sojourn given the jump sequence; this makes
the identity T_w * gamma_{w->} = N_w exact by construction, and the
per-trajectory return-time estimate equal to the summed visiting times.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .network import Network, StateLabel, canonical_index, format_label

EVENT_RECORD = struct.Struct("<Qd")


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory `index`; Philox keyed by (seed, index)."""
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), index]))


class _EdgeCache:
    """Per-state exit rate and cumulative jump probabilities."""

    __slots__ = ("net", "data")

    def __init__(self, net: Network):
        self.net = net
        self.data: dict[StateLabel, tuple[float, list[StateLabel], np.ndarray]] = {}

    def get(self, state: StateLabel):
        entry = self.data.get(state)
        if entry is None:
            edges = self.net.out_edges(state)
            total = sum(r for _, r in edges)
            targets = [t for t, _ in edges]
            if total > 0.0:
                cum = np.cumsum([r for _, r in edges]) / total
                cum[-1] = 1.0
            else:
                cum = np.empty(0)
            entry = (total, targets, cum)
            self.data[state] = entry
        return entry


def _pick(cum: np.ndarray, targets: list[StateLabel], u: float) -> StateLabel:
    # linear scan; out-degrees are small in every network we handle
    for i, c in enumerate(cum):
        if u <= c:
            return targets[i]
    return targets[-1]


@dataclass
class TrajectoryStats:
    """Aggregated return-time statistics from n independent trajectories."""

    n_trajectories: int
    returned_count: int
    absorbed_count: int
    return_time_mean: float
    return_time_stderr: float
    visiting_number: dict[StateLabel, tuple[float, float]]
    visiting_time: dict[StateLabel, tuple[float, float]]
    censored_at: float
    final_state_counts: dict[StateLabel, int]
    exit_rates: dict[StateLabel, float]
    seed: int

    def to_jsonable(self) -> dict:
        def statmap(m):
            return {
                format_label(k): {"mean": v[0], "stderr": v[1]}
                for k, v in sorted(m.items(), key=lambda kv: canonical_index(kv[0]))
            }

        return {
            "n_trajectories": self.n_trajectories,
            "returned_count": self.returned_count,
            "absorbed_count": self.absorbed_count,
            "return_time_mean": self.return_time_mean,
            "return_time_stderr": self.return_time_stderr,
            "censored_at": self.censored_at,
            "visiting_number": statmap(self.visiting_number),
            "visiting_time": statmap(self.visiting_time),
            "final_state_counts": {
                format_label(k): v
                for k, v in sorted(
                    self.final_state_counts.items(),
                    key=lambda kv: canonical_index(kv[0]),
                )
            },
            "seed": self.seed,
        }


def _run_trajectory(
    cache: _EdgeCache,
    rng: np.random.Generator,
    start: StateLabel,
    horizon: float,
    stop_on_return: bool,
    events: BinaryIO | None = None,
):
    """One Gillespie path.  Returns (visits, final_state, returned, absorbed).

    `visits` counts arrivals per state over the path segment [0, end),
    including the initial sojourn at `start` and excluding arrivals at
    zero-exit states (their sojourn is infinite and kept out of the
    visiting-time algebra).
    """
    visits: dict[StateLabel, int] = {}
    state = start
    t = 0.0
    while True:
        exit_rate, targets, cum = cache.get(state)
        if exit_rate == 0.0:
            return visits, state, False, state != start
        visits[state] = visits.get(state, 0) + 1
        wait = rng.exponential(1.0 / exit_rate)
        if t + wait > horizon:
            return visits, state, False, False
        t += wait
        state = _pick(cum, targets, rng.random())
        if events is not None:
            events.write(EVENT_RECORD.pack(canonical_index(state), t))
        if stop_on_return and state == start:
            return visits, state, True, False


class _Kahan:
    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x: float):
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


def simulate_return(
    net: Network,
    start: StateLabel,
    horizon: float,
    n: int,
    seed: int,
    events_path: str | None = None,
) -> TrajectoryStats:
    """Estimate return times and visiting statistics for `start`.

    Each trajectory runs until the first return to `start` after leaving,
    or until `horizon` (censored), or until it hits a zero-exit state other
    than `start` (absorbed elsewhere; counts as non-return).  Return-time
    means are conditional on return, which is flagged rather than hidden:
    for transient chains the unconditional expectation is infinite.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    cache = _EdgeCache(net)
    if cache.get(start)[0] <= 0.0:
        raise ValueError(f"start state {format_label(start)} has zero exit rate")

    count_sum: dict[StateLabel, int] = {}
    count_sq: dict[StateLabel, int] = {}
    rt = _Kahan()
    rt_sq = _Kahan()
    returned = 0
    absorbed = 0
    final_counts: dict[StateLabel, int] = {}

    events = open(events_path, "ab") if events_path else None
    try:
        for idx in range(n):
            rng = trajectory_rng(seed, idx)
            visits, final, did_return, was_absorbed = _run_trajectory(
                cache, rng, start, horizon, stop_on_return=True, events=events
            )
            for s, k in visits.items():
                count_sum[s] = count_sum.get(s, 0) + k
                count_sq[s] = count_sq.get(s, 0) + k * k
            final_counts[final] = final_counts.get(final, 0) + 1
            if was_absorbed:
                absorbed += 1
            if did_return:
                returned += 1
                t_hat = math.fsum(
                    k / cache.get(s)[0] for s, k in visits.items()
                )
                rt.add(t_hat)
                rt_sq.add(t_hat * t_hat)
    finally:
        if events is not None:
            events.close()

    if returned > 0:
        mean = rt.s / returned
        var = max(rt_sq.s / returned - mean * mean, 0.0)
        stderr = math.sqrt(var / returned)
    else:
        mean = math.nan
        stderr = math.nan

    visiting_number = {}
    visiting_time = {}
    exit_rates = {}
    for s, total in count_sum.items():
        m = total / n
        var = max(count_sq[s] / n - m * m, 0.0)
        se = math.sqrt(var / n)
        gamma = cache.get(s)[0]
        visiting_number[s] = (m, se)
        visiting_time[s] = (m / gamma, se / gamma)
        exit_rates[s] = gamma
    return TrajectoryStats(
        n_trajectories=n,
        returned_count=returned,
        absorbed_count=absorbed,
        return_time_mean=mean,
        return_time_stderr=stderr,
        visiting_number=visiting_number,
        visiting_time=visiting_time,
        censored_at=horizon,
        final_state_counts=final_counts,
        exit_rates=exit_rates,
        seed=seed,
    )


@dataclass
class ConsistencyReport:
    return_time_identity_pass: bool
    per_state_identity_pass: bool
    return_time_gap: float
    combined_tolerance: float
    max_state_gap: float

    def all_pass(self) -> bool:
        return self.return_time_identity_pass and self.per_state_identity_pass


def consistency_check(stats: TrajectoryStats) -> ConsistencyReport:
    """Verify the return-time identities on the accumulated statistics.

    Checks E[t_R] = sum_w T_w (within 3x the combined standard error; exact
    when no trajectory was censored or absorbed) and the per-state identity
    T_w * gamma_{w->} = N_w, which holds up to a single division round-trip.
    """
    if stats.returned_count < 1:
        raise ValueError("needs at least one returned trajectory")
    tot_time = sum(v[0] for v in stats.visiting_time.values())
    tot_se = math.sqrt(sum(v[1] ** 2 for v in stats.visiting_time.values()))
    gap = abs(stats.return_time_mean - tot_time)
    tol = 3.0 * math.sqrt(stats.return_time_stderr**2 + tot_se**2)
    max_state_gap = 0.0
    for s, (n_mean, _) in stats.visiting_number.items():
        t_mean = stats.visiting_time[s][0]
        max_state_gap = max(
            max_state_gap, abs(t_mean * stats.exit_rates[s] - n_mean)
        )
    state_tol = 4.0 * np.finfo(float).eps * max(
        (v[0] for v in stats.visiting_number.values()), default=1.0
    )
    return ConsistencyReport(
        return_time_identity_pass=gap <= tol,
        per_state_identity_pass=max_state_gap <= state_tol,
        return_time_gap=gap,
        combined_tolerance=tol,
        max_state_gap=max_state_gap,
    )


@dataclass
class OccupationEstimate:
    frequencies: dict[StateLabel, float]
    converged: bool
    half_l1_diff: float
    n_events: int
    elapsed: float

    def to_jsonable(self) -> dict:
        return {
            "frequencies": {
                format_label(k): v
                for k, v in sorted(
                    self.frequencies.items(),
                    key=lambda kv: canonical_index(kv[0]),
                )
            },
            "converged": self.converged,
            "half_l1_diff": self.half_l1_diff,
            "n_events": self.n_events,
            "elapsed": self.elapsed,
        }


def stationary_from_simulation(
    net: Network,
    start: StateLabel,
    total_time: float,
    seed: int,
    convergence_tol: float = 0.05,
) -> OccupationEstimate:
    """Normalized occupation-time histogram of one long trajectory.

    For positive-recurrent networks this converges to the stationary vector
    T / ||T||_1.  Convergence is judged by comparing the histograms of the
    two halves of the run; a drifting (transient) trajectory fails it.
    """
    cache = _EdgeCache(net)
    rng = trajectory_rng(seed, 0)
    occ: dict[StateLabel, float] = {}
    halves = [dict(), dict()]
    state = start
    t = 0.0
    events = 0
    while t < total_time:
        exit_rate, targets, cum = cache.get(state)
        if exit_rate == 0.0:
            dt = total_time - t
            occ[state] = occ.get(state, 0.0) + dt
            _split_halves(halves, state, t, dt, total_time)
            t = total_time
            break
        wait = rng.exponential(1.0 / exit_rate)
        dt = min(wait, total_time - t)
        occ[state] = occ.get(state, 0.0) + dt
        _split_halves(halves, state, t, dt, total_time)
        t += wait
        if t >= total_time:
            break
        state = _pick(cum, targets, rng.random())
        events += 1
    freqs = {s: v / total_time for s, v in occ.items()}
    h0 = _normalize(halves[0])
    h1 = _normalize(halves[1])
    states = set(h0) | set(h1)
    diff = sum(abs(h0.get(s, 0.0) - h1.get(s, 0.0)) for s in states)
    return OccupationEstimate(
        frequencies=freqs,
        converged=diff <= convergence_tol,
        half_l1_diff=diff,
        n_events=events,
        elapsed=min(t, total_time),
    )


def _split_halves(halves, state, t, dt, total_time):
    mid = total_time / 2.0
    lo, hi = t, t + dt
    if lo < mid:
        halves[0][state] = halves[0].get(state, 0.0) + min(hi, mid) - lo
    if hi > mid:
        halves[1][state] = halves[1].get(state, 0.0) + hi - max(lo, mid)


def _normalize(d: dict) -> dict:
    total = sum(d.values())
    if total <= 0:
        return {}
    return {k: v / total for k, v in d.items()}


def simulate_final_states(
    net: Network,
    start: StateLabel,
    horizon: float,
    n: int,
    seed: int,
) -> dict[StateLabel, int]:
    """Free-running trajectories (no return stop); counts of states at horizon.

    Used as the mass-leak probe: the fraction of trajectories sitting
    outside a window at the horizon estimates how much probability the
    infinite system keeps away from any finite truncation.
    """
    cache = _EdgeCache(net)
    counts: dict[StateLabel, int] = {}
    for idx in range(n):
        rng = trajectory_rng(seed, idx)
        _, final, _, _ = _run_trajectory(
            cache, rng, start, horizon, stop_on_return=False
        )
        counts[final] = counts.get(final, 0) + 1
    return counts

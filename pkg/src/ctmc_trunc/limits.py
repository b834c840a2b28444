"""Thermodynamic-limit and time-limit sweeps with a four-case verdict.

For a nested window sequence F_1 c F_2 c ... the sweep tabulates

* || P^{F_{n+1}}(t) - P^{F_n}(t) ||_1 over a time grid, compared entrywise
  against the stability bound
  (||dP0||_1 + t ||dG||_{1,1}) exp(t ||G^{[F_n]}||_{1,1});
* successive stationary-state differences || P*^{F_{n+1}} - P*^{F_n} ||_1;
* spectral gaps of the window generators (kept as a relaxation diagnostic).

"Existence of a limit" is operationalized as a Cauchy proxy: the last k
successive differences all fall below a tolerance and decrease
monotonically after a burn-in.  The time-then-size direction cannot be
computed literally (it needs the infinite system), so it is proxied by
long-time convergence on the largest window plus a simulated mass-leak
indicator on the lazy infinite network; outputs say so.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionTooLarge
from .evolution import ProbVec, evolve, long_time_limit, restrict
from .generator import SparseGenerator, generator_distance, norms, truncate_subnetwork
from .network import (
    FiniteSubset,
    Int,
    Network,
    StateLabel,
    canonical_index,
    is_strongly_connected,
    label_from_index,
    parse_label,
    subnetwork_edges,
)
from .presets import Preset
from .simulate import simulate_final_states
from .stationary import stationary_kernel

SEQUENCE_KINDS = ("balls", "shifted_balls", "prefixes")

# Cauchy-proxy defaults: the paper proves existence abstractly; a finite
# tool must use a proxy and say so.
CAUCHY_LAST_K = 5
CAUCHY_BURN_IN = 3
CAUCHY_TOL = 1e-6
CAUCHY_FLOOR = 1e-10
AGREEMENT_TOL = 1e-6
LEAK_TOL = 0.02
BOUND_SLACK = 1e-9


def window_sequence(
    net: Network, sequence_kind: str, n_max: int
) -> list[FiniteSubset]:
    if sequence_kind == "balls":
        windows = [net.window(n) for n in range(1, n_max + 1)]
    elif sequence_kind == "shifted_balls":
        if net.label_kind is not Int:
            raise ValueError("shifted_balls needs an integer-labeled network")
        windows = [
            FiniteSubset([Int(k) for k in range(-n, n + 2)])
            for n in range(1, n_max + 1)
        ]
    elif sequence_kind == "prefixes":
        windows = []
        for n in range(1, n_max + 1):
            size = len(net.window(n))
            windows.append(
                FiniteSubset(
                    [label_from_index(net.label_kind, k) for k in range(size)]
                )
            )
    else:
        raise ValueError(f"unknown sequence kind {sequence_kind!r}")
    for small, big in zip(windows, windows[1:]):
        if not small.issubset(big):
            raise ValueError("window sequence is not nested")
    return windows


def p0_evaluator(rule: str):
    """Initial-vector rule: 'point:<label>' or 'geometric:<ratio>'.

    The returned evaluator defines the infinite initial vector; each window
    restricts and renormalizes it, so geometric rules exercise the
    restriction rescale while point rules stay unit vectors.
    """
    kind, _, arg = rule.partition(":")
    if kind == "point":
        target = parse_label(arg)

        def point(lbl: StateLabel) -> float:
            return 1.0 if lbl == target else 0.0

        return point
    if kind == "geometric":
        ratio = float(arg) if arg else 0.5
        if not 0.0 < ratio < 1.0:
            raise ValueError("geometric ratio must lie in (0,1)")

        def geometric(lbl: StateLabel) -> float:
            return (1.0 - ratio) * ratio ** canonical_index(lbl)

        return geometric
    raise ValueError(f"unknown p0 rule {rule!r}")


def spectral_gap(g: SparseGenerator) -> float:
    """Distance from the nonzero spectrum to the imaginary axis.

    Eigenvalues within 1e-10 * op1 of zero count as the kernel; a zero
    generator has no nonzero spectrum and returns +inf.
    """
    if g.dim > 400:
        raise DimensionTooLarge(f"spectral gap refused for n={g.dim} > 400")
    eig = np.linalg.eigvals(g.dense())
    op1 = norms(g).op1
    nonzero = eig[np.abs(eig) >= 1e-10 * max(op1, 1e-300)]
    if nonzero.size == 0:
        return math.inf
    return float(np.min(-nonzero.real))


@dataclass
class VerdictReport:
    case: str  # "i" .. "v" or "inconclusive"
    stationary_limit_exists: bool | None
    time_limit_exists: bool | None
    limits_agree: bool | None
    discriminants: dict

    def to_jsonable(self) -> dict:
        return {
            "case": self.case,
            "stationary_limit_exists": self.stationary_limit_exists,
            "time_limit_exists": self.time_limit_exists,
            "limits_agree": self.limits_agree,
            "discriminants": self.discriminants,
        }


@dataclass
class SweepReport:
    preset_name: str
    sequence_kind: str
    window_sizes: list[int]
    t_grid: list[float]
    evolve_diffs: np.ndarray       # (n_windows - 1) x len(t_grid)
    groenwall_bounds: np.ndarray   # same shape
    stationary_diffs: list[float]
    spectral_gaps: list[float]     # nan above the dense guard
    leak_fraction: float
    time_limit_converged: bool
    agreement_gap: float
    verdict: VerdictReport = field(init=False)

    def __post_init__(self):
        excess = self.evolve_diffs - (self.groenwall_bounds + BOUND_SLACK)
        if np.any(excess > 0):
            worst = float(np.max(excess))
            raise AssertionError(
                f"stability bound violated by {worst}; this is a bug"
            )
        self.verdict = four_limit_verdict(self)


def _cauchy_proxy(
    diffs: list[float],
    tol: float = CAUCHY_TOL,
    last_k: int = CAUCHY_LAST_K,
    burn_in: int = CAUCHY_BURN_IN,
    floor: float = CAUCHY_FLOOR,
) -> bool | None:
    """True = limit exists, False = it does not, None = inconclusive."""
    if not diffs:
        return None
    k = min(last_k, len(diffs))
    tail_ok = all(d < tol for d in diffs[-k:])
    clamped = [max(d, floor) for d in diffs[burn_in:]]
    monotone = all(b <= a * (1.0 + 1e-9) for a, b in zip(clamped, clamped[1:]))
    if tail_ok and monotone:
        return True
    if not tail_ok:
        return False
    return None


def four_limit_verdict(report: "SweepReport") -> VerdictReport:
    """Classify the run into the five-way limit-existence table.

    Column one (time limit of the infinite system) is judged by the
    largest-window convergence plus the leak probe; column two by the
    Cauchy proxy on the stationary sequence.  Non-monotone trends beyond
    burn-in yield an inconclusive verdict rather than an error.
    """
    stat_exists = _cauchy_proxy(report.stationary_diffs)
    leak_small = report.leak_fraction <= LEAK_TOL
    time_exists = bool(report.time_limit_converged and leak_small)
    agree = (
        report.agreement_gap <= AGREEMENT_TOL
        if math.isfinite(report.agreement_gap)
        else None
    )
    disc = {
        "stationary_diff_tail": report.stationary_diffs[-min(5, len(report.stationary_diffs)):],
        "leak_fraction": report.leak_fraction,
        "largest_window_converged": report.time_limit_converged,
        "agreement_gap": report.agreement_gap,
        "cauchy_tol": CAUCHY_TOL,
        "leak_tol": LEAK_TOL,
        "proxy_note": (
            "time-then-size direction is proxied by the largest window plus "
            "a simulated boundary-leak indicator"
        ),
    }
    if stat_exists is None:
        return VerdictReport("inconclusive", None, time_exists, agree, disc)
    if time_exists and stat_exists:
        case = "i" if agree else "ii"
        return VerdictReport(case, True, True, agree, disc)
    if not time_exists and not stat_exists:
        return VerdictReport("iii", False, False, None, disc)
    if time_exists and not stat_exists:
        return VerdictReport("iv", False, True, None, disc)
    return VerdictReport("v", True, False, None, disc)


def _window_stationary(net: Network, f: FiniteSubset, p0: ProbVec) -> ProbVec:
    """Stationary state of the window.

    Irreducible windows get a kernel solve.  Reducible ones use the
    structural limit when a single absorbing class is reachable from the
    initial support, and fall back to long-time evolution when the limit
    genuinely depends on the initial state.
    """
    g = truncate_subnetwork(net, f)
    edges = subnetwork_edges(net, f)
    if is_strongly_connected([(s, d) for s, d, _ in edges], len(f)):
        return stationary_kernel(g).vector
    from .stationary import absorbing_limit

    shortcut = absorbing_limit(g, p0)
    if shortcut is not None:
        return shortcut
    vec, _converged, _t = long_time_limit(g, p0, tol=1e-10)
    return vec


def thermodynamic_sweep(
    preset: Preset,
    sequence_kind: str = "balls",
    n_max: int = 16,
    t_grid: list[float] | None = None,
    p0_rule: str = "geometric:0.5",
    evolve_tol: float = 1e-12,
    threads: int = 1,
    leak_trajectories: int = 500,
    leak_horizon: float | None = None,
    leak_seed: int = 20_240_101,
) -> SweepReport:
    """Tabulate window-to-window differences, bounds, and limit verdicts."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if t_grid is None:
        t_grid = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
    t_grid = sorted(float(t) for t in t_grid)
    net = preset.network
    windows = window_sequence(net, sequence_kind, n_max)
    evaluator = p0_evaluator(p0_rule)
    generators = [truncate_subnetwork(net, f) for f in windows]
    p0s = [ProbVec.from_evaluator(f, evaluator, normalize=True) for f in windows]

    def evolve_task(args):
        g, p0, t = args
        return evolve(g, p0, t, evolve_tol).result

    tasks = [(generators[i], p0s[i], t) for i in range(len(windows)) for t in t_grid]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(evolve_task, tasks))
    else:
        flat = [evolve_task(a) for a in tasks]
    n_t = len(t_grid)
    evolved = [flat[i * n_t : (i + 1) * n_t] for i in range(len(windows))]

    n_pairs = len(windows) - 1
    evolve_diffs = np.zeros((n_pairs, n_t))
    bounds = np.zeros((n_pairs, n_t))
    for i in range(n_pairs):
        dp0 = p0s[i].diff_l1(p0s[i + 1])
        dgen = generator_distance(generators[i], generators[i + 1])
        beta = norms(generators[i]).op11
        for j, t in enumerate(t_grid):
            evolve_diffs[i, j] = evolved[i][j].diff_l1(evolved[i + 1][j])
            exponent = t * beta
            if exponent <= 700.0:
                bounds[i, j] = (dp0 + t * dgen) * math.exp(exponent)
            else:
                bounds[i, j] = math.inf

    stationaries = [
        _window_stationary(net, f, p0) for f, p0 in zip(windows, p0s)
    ]
    stationary_diffs = [
        stationaries[i].diff_l1(stationaries[i + 1]) for i in range(n_pairs)
    ]
    gaps = []
    for g in generators:
        if g.dim <= 400:
            gaps.append(spectral_gap(g))
        else:
            gaps.append(math.nan)

    largest = generators[-1]
    limit_vec, converged, _t_final = long_time_limit(
        largest, p0s[-1], tol=1e-8
    )
    agreement_gap = limit_vec.diff_l1(stationaries[-1])

    if leak_horizon is None:
        leak_horizon = 10.0 * t_grid[-1]
    finals = simulate_final_states(
        net, preset.default_root, leak_horizon, leak_trajectories, leak_seed
    )
    outside = sum(c for s, c in finals.items() if s not in windows[-1])
    leak_fraction = outside / leak_trajectories

    return SweepReport(
        preset_name=preset.name,
        sequence_kind=sequence_kind,
        window_sizes=[len(f) for f in windows],
        t_grid=list(t_grid),
        evolve_diffs=evolve_diffs,
        groenwall_bounds=bounds,
        stationary_diffs=stationary_diffs,
        spectral_gaps=gaps,
        leak_fraction=leak_fraction,
        time_limit_converged=converged,
        agreement_gap=agreement_gap,
    )

"""Preset networks with closed-form reference solutions where they exist.

Each preset bundles a lazy network, its parameter values, the closed-form
(unnormalized) stationary candidate where one is known, and a recurrence
classification.  The candidate is the per-edge balance solution for the
reversible presets; the reshuffle network instead carries the full kernel
solution (it violates detailed balance by design).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .evolution import ProbVec
from .network import (
    Bits,
    FiniteSubset,
    Int,
    Nat,
    Network,
    StateLabel,
    label_from_index,
)

POSITIVE_RECURRENT = "positive_recurrent"
NOT_POSITIVE_RECURRENT = "not_positive_recurrent"
TRANSIENT = "transient"
ABSORBING = "absorbing"


@dataclass(frozen=True)
class Preset:
    name: str
    network: Network
    params: dict
    reference_stationary: Callable[[StateLabel], float] | None
    normalizer: float | None
    recurrence_class: str
    recurrence_note: str
    default_root: StateLabel
    reversible: bool


def _lambda_fn(kind: str, q: float) -> Callable[[int], float]:
    """Log-safe positive sequences lambda_n used by the chain presets."""
    if kind == "geometric":
        return lambda n: math.exp(n * math.log(q))
    if kind == "constant":
        return lambda n: 1.0
    if kind == "quadratic":
        return lambda n: math.exp(n * n * math.log(q))
    raise ConfigError(f"unknown lambda sequence kind {kind!r}")


def _lambda_root_limit(kind: str, q: float) -> float:
    # lim lambda_n^(1/n): the growth rate entering the normalizability test
    if kind == "geometric":
        return q
    if kind == "constant":
        return 1.0
    if kind == "quadratic":
        return 0.0
    raise ConfigError(f"unknown lambda sequence kind {kind!r}")


def _chain_class(x: float, lam: float) -> tuple[str, str]:
    ratio = lam * x / (1.0 - x)
    if ratio < 1.0:
        return POSITIVE_RECURRENT, f"x={x} < 1/(1+lambda)={1/(1+lam):.6g}"
    if ratio == 1.0:
        return NOT_POSITIVE_RECURRENT, "candidate norm diverges (boundary case)"
    return TRANSIENT, f"x={x} > 1/(1+lambda)={1/(1+lam):.6g}"


def chain_n0(x: float = 0.2, lambda_kind: str = "geometric", q: float = 0.9) -> Preset:
    """Birth-death chain on the nonnegative integers with one open end.

    Rates gamma_{n->n+1} = lambda_{n+1} x and gamma_{n+1->n} = lambda_n (1-x);
    the balance candidate is X*(n) = (lambda_n/lambda_0) (x/(1-x))^n,
    normalizable iff x < 1/(1+lambda) with lambda the root-growth of the
    sequence.
    """
    if not 0.0 < x < 1.0:
        raise ConfigError(f"x must lie in (0,1), got {x}")
    lam_fn = _lambda_fn(lambda_kind, q)
    lam0 = lam_fn(0)
    r = x / (1.0 - x)

    def oracle(s: Nat):
        m = s.n
        edges = [(Nat(m + 1), lam_fn(m + 1) * x)]
        if m >= 1:
            edges.append((Nat(m - 1), lam_fn(m - 1) * (1.0 - x)))
        return edges

    def reference(s: Nat) -> float:
        return lam_fn(s.n) / lam0 * r**s.n

    lam_limit = _lambda_root_limit(lambda_kind, q)
    cls, note = _chain_class(x, lam_limit)
    normalizer = None
    if lambda_kind == "geometric" and q * r < 1.0:
        normalizer = 1.0 / (1.0 - q * r)
    elif lambda_kind == "constant" and r < 1.0:
        normalizer = 1.0 / (1.0 - r)
    net = Network(
        "chain_n0",
        oracle,
        lambda n: [Nat(k) for k in range(n + 1)],
        Nat,
    )
    return Preset(
        name="chain_n0",
        network=net,
        params={"x": x, "lambda_kind": lambda_kind, "q": q},
        reference_stationary=reference,
        normalizer=normalizer,
        recurrence_class=cls,
        recurrence_note=note,
        default_root=Nat(0),
        reversible=True,
    )


def chain_z(
    x: float = 0.2,
    y: float = 0.2,
    lambda_kind: str = "geometric",
    mu_kind: str = "geometric",
    q_lambda: float = 0.9,
    q_mu: float = 0.9,
) -> Preset:
    """Birth-death chain on the integers (two open ends).

    The positive side follows the chain_n0 rates with (lambda, x); the
    negative side mirrors them with (mu, y).  Normalizable iff both sides
    are subcritical.
    """
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise ConfigError(f"(x,y) must lie in (0,1)^2, got ({x},{y})")
    lam_fn = _lambda_fn(lambda_kind, q_lambda)
    mu_fn = _lambda_fn(mu_kind, q_mu)
    rx = x / (1.0 - x)
    ry = y / (1.0 - y)

    def oracle(s: Int):
        z = s.z
        if z >= 0:
            right = (Int(z + 1), lam_fn(z + 1) * x)
            left = (
                Int(z - 1),
                lam_fn(z - 1) * (1.0 - x) if z >= 1 else mu_fn(1) * y,
            )
            return [right, left]
        n = -z
        return [
            (Int(z - 1), mu_fn(n + 1) * y),
            (Int(z + 1), mu_fn(n - 1) * (1.0 - y)),
        ]

    def reference(s: Int) -> float:
        z = s.z
        if z > 0:
            return lam_fn(z) / lam_fn(0) * rx**z
        if z < 0:
            return mu_fn(-z) / mu_fn(0) * ry ** (-z)
        return 1.0

    lam_l = _lambda_root_limit(lambda_kind, q_lambda)
    lam_m = _lambda_root_limit(mu_kind, q_mu)
    cls_x, _ = _chain_class(x, lam_l)
    cls_y, _ = _chain_class(y, lam_m)
    if cls_x == POSITIVE_RECURRENT and cls_y == POSITIVE_RECURRENT:
        cls, note = POSITIVE_RECURRENT, "both tails subcritical"
    elif TRANSIENT in (cls_x, cls_y):
        cls, note = TRANSIENT, f"tails: +{cls_x}, -{cls_y}"
    else:
        cls, note = NOT_POSITIVE_RECURRENT, f"tails: +{cls_x}, -{cls_y}"
    normalizer = None
    if lambda_kind == mu_kind == "geometric":
        sx, sy = q_lambda * rx, q_mu * ry
        if sx < 1.0 and sy < 1.0:
            normalizer = 1.0 + sx / (1.0 - sx) + sy / (1.0 - sy)
    net = Network(
        "chain_z",
        oracle,
        lambda n: [Int(k) for k in range(-n, n + 1)],
        Int,
    )
    return Preset(
        name="chain_z",
        network=net,
        params={
            "x": x,
            "y": y,
            "lambda_kind": lambda_kind,
            "mu_kind": mu_kind,
            "q_lambda": q_lambda,
            "q_mu": q_mu,
        },
        reference_stationary=reference,
        normalizer=normalizer,
        recurrence_class=cls,
        recurrence_note=note,
        default_root=Int(0),
        reversible=True,
    )


def chain_z_second_kernel_element(preset: Preset, z: int) -> float:
    """Second (never summable) kernel solution Y* of the two-sided chain.

    Y*(0) = 0; to the right Y*(n) sums reverse-weighted path products and
    grows without bound in max-norm, witnessing that the algebraic kernel
    of the infinite generator is two-dimensional while only X* can ever be
    normalized.
    """
    if preset.name != "chain_z":
        raise ValueError("Y* is defined for the chain_z preset")
    net = preset.network

    def rate(a: int, b: int) -> float:
        return dict(net.out_edges(Int(a)))[Int(b)]

    if z == 0:
        return 0.0
    if z > 0:
        total = 0.0
        for j in range(1, z + 1):
            prod = 1.0
            for eps in range(j, z):
                prod *= rate(eps, eps + 1) / rate(eps, eps - 1)
            total += prod
        return total / rate(z, z - 1)
    total = 0.0
    for j in range(1, -z + 1):
        prod = 1.0
        for eps in range(z + 1, -j + 1):
            prod *= rate(eps, eps - 1) / rate(eps, eps + 1)
        total += prod
    return -total / rate(z, z + 1)


def _c_fn(kind: str, c_const: float) -> Callable[[int], float]:
    if kind == "constant":
        return lambda i: c_const
    if kind == "linear":
        return lambda i: float(i)
    if kind == "quadratic":
        return lambda i: float(i * i)
    if kind == "exponential":
        return lambda i: float(2**i)
    raise ConfigError(f"unknown c sequence kind {kind!r}")


def hypercube(
    n_sites: int = 8,
    q: float = 0.5,
    c_kind: str = "linear",
    c_const: float = 1.0,
) -> Preset:
    """Hypercube of two-state sites with per-site ratio q^c(i).

    The paper-level object fixes only the up/down ratio per site; absolute
    rates are gauged by setting every downward rate to 1 (the stationary
    solution depends only on the ratios).  Site count is finite so exit
    rates stay finite; window n is the full sub-cube on the first n sites.
    """
    if not 0.0 < q < 1.0:
        raise ConfigError(f"q must lie in (0,1), got {q}")
    if n_sites < 1:
        raise ConfigError("n_sites must be >= 1")
    c = _c_fn(c_kind, c_const)
    if c(n_sites) * math.log(q) < math.log(1e-290):
        raise ConfigError(
            "up-rates underflow for the requested site count; reduce n_sites"
        )

    def oracle(s: Bits):
        idx = sum(b << i for i, b in enumerate(s.w))
        edges = []
        for i in range(1, n_sites + 1):
            other = label_from_index(Bits, idx ^ (1 << (i - 1)))
            if idx & (1 << (i - 1)):
                edges.append((other, 1.0))
            else:
                edges.append((other, q ** c(i)))
        return edges

    def reference(s: Bits) -> float:
        return math.exp(
            sum(c(i + 1) for i, b in enumerate(s.w) if b) * math.log(q)
        )

    if c_kind == "constant":
        cls, note = NOT_POSITIVE_RECURRENT, "constant c: candidate norm diverges"
    else:
        cls, note = POSITIVE_RECURRENT, "ratio test limit q < 1"

    def enumeration(n: int):
        dims = min(n, n_sites)
        return [label_from_index(Bits, k) for k in range(1 << dims)]

    net = Network("hypercube", oracle, enumeration, Bits, bits_prefix_dims=n_sites)
    return Preset(
        name="hypercube",
        network=net,
        params={"n_sites": n_sites, "q": q, "c_kind": c_kind, "c_const": c_const},
        reference_stationary=reference,
        normalizer=None,
        recurrence_class=cls,
        recurrence_note=note,
        default_root=Bits(()),
        reversible=True,
    )


def hypercube_window_normalizer(preset: Preset, n_dims: int) -> float:
    """Closed-form ||X*||_1 over the n-dimensional sub-cube window."""
    q = preset.params["q"]
    c = _c_fn(preset.params["c_kind"], preset.params["c_const"])
    total = 1.0
    for i in range(1, n_dims + 1):
        total *= 1.0 + q ** c(i)
    return total


def reshuffle_network(q: float = 0.8, a: float = 1.0) -> Preset:
    """One-directional flow to the right with reshuffle edges k -> -k.

    gamma_{z->z+1} = q^|z| for every integer z; gamma_{k->-k} = a q^k for
    k >= 1.  No reverse edges exist, so detailed-balance machinery is
    inapplicable by construction.  The kernel solution P* exists (is
    normalizable) iff (1+a) q > 1.
    """
    if not 0.0 < q < 1.0:
        raise ConfigError(f"q must lie in (0,1), got {q}")
    if a <= 0.0:
        raise ConfigError(f"a must be positive, got {a}")

    def oracle(s: Int):
        z = s.z
        edges = [(Int(z + 1), q ** abs(z))]
        if z >= 1:
            edges.append((Int(-z), a * q**z))
        return edges

    valid = (1.0 + a) * q > 1.0
    s_ratio = 1.0 / ((1.0 + a) * q)

    def reference(lbl: Int) -> float:
        z = lbl.z
        if z < 0:
            return (1.0 + a) * s_ratio ** (-z)
        return s_ratio**z

    normalizer = None
    if valid:
        normalizer = (1.0 + a) * (1.0 + q) / ((1.0 + a) * q - 1.0)
    net = Network(
        "reshuffle",
        oracle,
        lambda n: [Int(k) for k in range(-n, n + 1)],
        Int,
    )
    return Preset(
        name="reshuffle",
        network=net,
        params={"q": q, "a": a},
        reference_stationary=reference if valid else None,
        normalizer=normalizer,
        recurrence_class=POSITIVE_RECURRENT if valid else NOT_POSITIVE_RECURRENT,
        recurrence_note=f"(1+a)q = {(1 + a) * q:.6g} vs 1",
        default_root=Int(0),
        reversible=False,
    )


def reshuffle_window_stationary(q: float, a: float, n: int) -> ProbVec:
    """Exact stationary vector of the subnetwork window {-n..n}.

    Equals the restriction of P* plus the boundary correction
    a/[(1+a)q]^n concentrated on the rightmost state, renormalized.
    """
    s = 1.0 / ((1.0 + a) * q)
    f = FiniteSubset([Int(z) for z in range(-n, n + 1)])
    vals = np.empty(len(f))
    for i, lbl in enumerate(f.members):
        z = lbl.z
        if z < 0:
            vals[i] = (1.0 + a) * s ** (-z)
        elif z < n:
            vals[i] = s**z
        else:
            vals[i] = (1.0 + a) * s**n
    return ProbVec(f, vals / vals.sum())


def trap_chain(p: float = 0.4, q: float = 0.9) -> Preset:
    """Linear chain with an open end and an absorbing state at 0.

    gamma_{n->n+1} = p q^n and gamma_{n->n-1} = (1-p) q^n for n >= 1; state
    0 has no outgoing edges.  Every finite truncation relaxes to E_0; on the
    infinite network a p > 1/2 walker escapes to the right with positive
    probability.
    """
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise ConfigError(f"p and q must lie in (0,1), got p={p}, q={q}")

    def oracle(s: Nat):
        m = s.n
        if m == 0:
            return []
        scale = q**m
        return [(Nat(m + 1), p * scale), (Nat(m - 1), (1.0 - p) * scale)]

    def reference(s: Nat) -> float:
        # stationary limit of every truncation is the point mass at 0
        return 1.0 if s.n == 0 else 0.0

    if p > 0.5:
        cls, note = TRANSIENT, "escape to infinity with positive probability"
    else:
        cls, note = ABSORBING, "absorption at state 0 with probability one"
    net = Network(
        "trap_chain",
        oracle,
        lambda n: [Nat(k) for k in range(n + 1)],
        Nat,
    )
    return Preset(
        name="trap_chain",
        network=net,
        params={"p": p, "q": q},
        reference_stationary=reference,
        normalizer=1.0,
        recurrence_class=cls,
        recurrence_note=note,
        default_root=Nat(1),
        reversible=False,
    )


def three_state_example(
    rate12: float = 1.0, rate21: float = 1.0, rate13: float = 1.0, rate32: float = 1.0
) -> Preset:
    """The three-state truncation workhorse: 1 <-> 2, 1 -> 3 -> 2."""

    def oracle(s: Nat):
        return {
            1: [(Nat(2), rate12), (Nat(3), rate13)],
            2: [(Nat(1), rate21)],
            3: [(Nat(2), rate32)],
        }.get(s.n, [])

    def reference(s: Nat) -> float:
        return {
            1: 1.0,
            2: (rate12 + rate13) / rate21,
            3: rate13 / rate32,
        }.get(s.n, 0.0)

    def enumeration(n: int):
        return [Nat(k) for k in range(1, min(n, 3) + 1)]

    net = Network("three_state", oracle, enumeration, Nat)
    return Preset(
        name="three_state",
        network=net,
        params={
            "rate12": rate12,
            "rate21": rate21,
            "rate13": rate13,
            "rate32": rate32,
        },
        reference_stationary=reference,
        normalizer=1.0 + (rate12 + rate13) / rate21 + rate13 / rate32,
        recurrence_class=POSITIVE_RECURRENT,
        recurrence_note="finite irreducible network",
        default_root=Nat(1),
        reversible=False,
    )


PRESET_FACTORIES: dict[str, Callable[..., Preset]] = {
    "chain_n0": chain_n0,
    "chain_z": chain_z,
    "hypercube": hypercube,
    "reshuffle": reshuffle_network,
    "trap_chain": trap_chain,
    "three_state": three_state_example,
}


def build_preset(name: str, params: dict | None = None) -> Preset:
    """Instantiate a preset by CLI name, rejecting unknown parameters."""
    if name not in PRESET_FACTORIES:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESET_FACTORIES))}"
        )
    factory = PRESET_FACTORIES[name]
    params = dict(params or {})
    import inspect

    allowed = set(inspect.signature(factory).parameters)
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(
            f"unknown parameter(s) {sorted(unknown)} for preset {name!r}"
        )
    return factory(**params)

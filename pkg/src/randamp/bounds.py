"""Concentration bounds used by the protocol analysis, with Monte Carlo
validators that compare empirical tail frequencies against the closed forms.

The empirical checks are white-box: they simulate processes whose
conditional means are known by construction, because the arithmetic average
of conditional means is not observable from a transcript alone.  All checks
are one-sided (empirical frequency must not exceed the bound plus sampling
slack) and seeded.

Two tail constants appear for the same deviation `s`: the direct martingale
tail 2 exp(-n s^2 / 2), and the weaker 2 exp(-n s^2 / 4) used when the tail
statement is split through a Markov step into "a set of histories of measure
1 - eps, on each of which the bad outcomes have mass at most eps" (take
eps^2 = the direct tail, up to the constant).  Both are exposed;
`azuma_bound` is the direct one, `markov_split_epsilon` the split one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sv_source import DEFAULT_MAP, SettingMap, make_strategy, _as_fraction


@dataclass(frozen=True)
class MartingaleTrace:
    """Per-round 0/1 indicators with their known conditional means."""

    indicators: np.ndarray
    conditional_means: np.ndarray

    def __post_init__(self):
        if self.indicators.shape != self.conditional_means.shape:
            raise ValueError("indicator / mean length mismatch")
        if np.any((self.conditional_means < 0) | (self.conditional_means > 1)):
            raise ValueError("conditional means must lie in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.indicators)

    def empirical_average(self) -> float:
        return float(self.indicators.mean())

    def conditional_average(self) -> float:
        return float(self.conditional_means.mean())


def azuma_bound(n: int, s: float) -> float:
    """Tail bound 2 exp(-n s^2 / 2) on |L_n - Lbar_n| >= s."""
    if s <= 0:
        raise ValueError("deviation must be positive")
    return 2.0 * math.exp(-n * s * s / 2.0)


def markov_split_epsilon(n: int, s: float) -> float:
    """The split-form constant 2 exp(-n s^2 / 4); see module docstring."""
    if s <= 0:
        raise ValueError("deviation must be positive")
    return 2.0 * math.exp(-n * s * s / 4.0)


def _simulate_traces(spec, n: int, trials: int, rng: np.random.Generator):
    """Vectorized white-box Bernoulli processes.

    Kinds: ("fair_coin",), ("iid", p), ("constant", bit),
    ("markov", p_after0, p_after1) with round 0 mean p_after0.
    Returns (indicators, conditional_means) of shape (trials, n).
    """
    kind = spec[0] if isinstance(spec, (tuple, list)) else spec
    if kind == "fair_coin":
        means = np.full((trials, n), 0.5)
        vals = (rng.random((trials, n)) < 0.5).astype(np.int8)
        return vals, means
    if kind == "iid":
        p = float(spec[1])
        means = np.full((trials, n), p)
        vals = (rng.random((trials, n)) < p).astype(np.int8)
        return vals, means
    if kind == "constant":
        bit = int(spec[1])
        return (np.full((trials, n), bit, dtype=np.int8),
                np.full((trials, n), float(bit)))
    if kind == "markov":
        p0, p1 = float(spec[1]), float(spec[2])
        vals = np.zeros((trials, n), dtype=np.int8)
        means = np.zeros((trials, n))
        u = rng.random((trials, n))
        prev = np.zeros(trials, dtype=np.int8)
        for i in range(n):
            p = np.where(prev == 0, p0, p1)
            means[:, i] = p
            vals[:, i] = (u[:, i] < p).astype(np.int8)
            prev = vals[:, i]
        return vals, means
    raise ValueError(f"unknown trace spec {spec!r}")


def azuma_empirical(spec, n: int, s: float, trials: int, seed: int = 0) -> dict:
    """Fraction of trials with |L_n - Lbar_n| >= s, against the bound.

    Asserts empirical <= bound + 3 sigma where sigma is the binomial
    standard error of the frequency estimate at the bound.
    """
    rng = np.random.default_rng(seed)
    vals, means = _simulate_traces(spec, n, trials, rng)
    dev = np.abs(vals.mean(axis=1) - means.mean(axis=1))
    freq = float((dev >= s).mean())
    bound = azuma_bound(n, s)
    slack = 3.0 * math.sqrt(max(bound * (1 - bound), 1e-12) / trials)
    assert freq <= bound + slack, f"empirical {freq} exceeds {bound} + {slack}"
    return {"empirical": freq, "bound": bound, "slack": slack,
            "n": n, "s": s, "trials": trials}


def linear_fraction(values, delta: float) -> list[int]:
    """Indices i with values[i] <= sqrt(delta), given mean(values) <= delta.

    By Markov's inequality fewer than sqrt(delta) * n entries can exceed
    sqrt(delta), so the returned set has size >= (1 - sqrt(delta)) * n;
    this postcondition is asserted on every call.
    """
    vals = np.asarray(values, dtype=float)
    n = len(vals)
    if n == 0 or delta <= 0:
        raise ValueError("need nonempty values and delta > 0")
    if vals.mean() > delta + 1e-12:
        raise ValueError(f"mean {vals.mean()} exceeds delta {delta}")
    root = math.sqrt(delta)
    idx = [i for i in range(n) if vals[i] <= root]
    assert len(idx) >= (1.0 - root) * n - 1e-9, "linear-fraction bound violated"
    return idx


def qualifying_round_count(trace_target_flags, conditionals,
                           mu1: float, kappa: float) -> int:
    """Rounds at the target setting whose conditional target-outcome
    probability is at least kappa.

    Precondition: the conditional average of the per-round target indicator
    is at least mu1/2.  The count is then at least
    n (mu1 - 2 kappa) / (2 (1 - kappa)): rounds below kappa contribute less
    than kappa to the average, so the qualifying rounds must carry the rest.
    The lower bound is asserted.
    """
    flags = np.asarray(trace_target_flags, dtype=bool)
    cond = np.asarray(conditionals, dtype=float)
    if flags.shape != cond.shape:
        raise ValueError("flag / conditional length mismatch")
    if not 0 < kappa < 1:
        raise ValueError("kappa must be in (0, 1)")
    n = len(flags)
    s_bar = float((flags * cond).mean())
    if s_bar < mu1 / 2 - 1e-12:
        raise ValueError(f"conditional average {s_bar} below mu1/2 = {mu1 / 2}")
    count = int(np.sum(flags & (cond >= kappa)))
    floor = n * (mu1 - 2 * kappa) / (2 * (1 - kappa))
    assert count >= floor - 1e-9, f"count {count} below floor {floor}"
    return count


def relative_entropy(gamma: float, zeta: float) -> float:
    """Binary relative entropy D(gamma || zeta) in nats.

    Edge conventions by continuity: D(g||g) = 0; D(1||z) = ln(1/z);
    D(0||z) = ln(1/(1-z)); a zero/one reference with a differing argument
    gives +inf.
    """
    if not (0 <= zeta <= gamma <= 1):
        raise ValueError("need 0 <= zeta <= gamma <= 1")
    if gamma == zeta:
        return 0.0
    if zeta == 0.0:
        return math.inf                       # gamma > 0 against zero reference
    if gamma == 1.0:
        d = math.log(1.0 / zeta)
    elif gamma == 0.0:
        d = math.log(1.0 / (1.0 - zeta))
    else:
        d = gamma * math.log(gamma / zeta) \
            + (1.0 - gamma) * math.log((1.0 - gamma) / (1.0 - zeta))
    assert d >= 2.0 * (gamma - zeta) ** 2 - 1e-12, "Pinsker-type floor violated"
    return d


def chernoff_bound(n: int, gamma: float, zeta: float) -> float:
    """exp(-n D(gamma||zeta)): tail bound on sum X_i >= gamma n for Boolean
    variables whose joint hitting probabilities are dominated by zeta^|S|."""
    d = relative_entropy(gamma, zeta)
    return math.exp(-n * d) if d != math.inf else 0.0


def chernoff_empirical(n: int, gamma: float, zeta: float, trials: int,
                       seed: int = 0) -> dict:
    """Validate the tail bound on iid Bernoulli(zeta), which meets the
    product premise with equality."""
    rng = np.random.default_rng(seed)
    counts = (rng.random((trials, n)) < zeta).sum(axis=1)
    freq = float((counts >= gamma * n).mean())
    bound = chernoff_bound(n, gamma, zeta)
    slack = 3.0 * math.sqrt(max(bound * (1 - bound), 1e-12) / trials)
    assert freq <= bound + slack, f"empirical {freq} exceeds {bound} + {slack}"
    return {"empirical": freq, "bound": bound, "slack": slack,
            "n": n, "gamma": gamma, "zeta": zeta, "trials": trials}


def settings_tail_empirical(eps, strategy_spec, n: int, gamma: float,
                            trials: int, seed: int = 0,
                            mapping: SettingMap = DEFAULT_MAP,
                            target: tuple[int, int] = (1, 2)) -> dict:
    """Tail of "target setting missed in >= gamma n rounds" under a
    source-driven settings stream, against exp(-n D(gamma||zeta)).

    zeta = 1 - (1/2 - eps)^8.  The stream is simulated vectorized with the
    same per-block conditional laws as the sequential source strategies.
    """
    epsf = _as_fraction(eps)
    zeta = float(1 - (1 - 2 * epsf) ** 8 / 256)   # 1 - (1/2-eps)^8, exactly
    strat = make_strategy(strategy_spec, epsf)
    policy = getattr(strat, "policy", None)
    p0_table = np.full(512, 0.5)
    if policy is not None:
        for node, p in policy.items():
            p0_table[node] = float(p)
    elif getattr(strat, "biases", None) is not None:
        if len(strat.biases) not in (1, 2, 4, 8):
            raise ValueError("vectorized run needs a bias cycle dividing 8")
        for node in range(1, 256):
            depth = node.bit_length() - 1
            p0_table[node] = 0.5 + float(strat.biases[depth % len(strat.biases)])
    is_miss = np.array([mapping.map_block(v) != tuple(target) for v in range(256)])
    rng = np.random.default_rng(seed)
    misses = np.zeros(trials, dtype=np.int64)
    for _ in range(n):
        node = np.ones(trials, dtype=np.int64)
        for _bit in range(8):
            p0 = p0_table[node]
            bit = (rng.random(trials) >= p0).astype(np.int64)
            node = 2 * node + bit
        misses += is_miss[node - 256]
    freq = float((misses >= gamma * n).mean())
    bound = chernoff_bound(n, gamma, zeta)
    slack = 3.0 * math.sqrt(max(bound * (1 - bound), 1e-12) / trials)
    assert freq <= bound + slack, f"empirical {freq} exceeds {bound} + {slack}"
    return {"empirical": freq, "bound": bound, "slack": slack, "zeta": zeta,
            "n": n, "gamma": gamma, "trials": trials}

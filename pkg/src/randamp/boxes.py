"""Two-party conditional-probability behaviors and stateful device oracles.

A Behavior is a table P(x1,x2|u1,u2) over 4x4 outcomes and 9x9 settings,
nonnegative, normalized per setting pair, and no-signaling (each party's
marginal is independent of the other party's setting).

The ideal box for the 18-vector model has entries
``<v_a|v_b>^2 / (4 |v_a|^2 |v_b|^2)`` where v_a, v_b are the projector
vectors selected by the settings and outcomes.  All denominators are powers
of two not exceeding 64, so the float table is exact and the 504 indicator
entries are exactly zero.

Device oracles answer one round at a time.  Their memory holds only the
settings seen so far, their own past outcomes and private randomness, so the
distribution of round k's outcome never depends on settings of later rounds
(time-ordered no-signaling holds by construction).  Oracles and bit sources
share no state: a device is built, with its own generator, before any source
bits are drawn.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from random import Random

import numpy as np

from .ks_bell import BellFunctional, KSModel

N_SETTINGS = 9
N_OUTCOMES = 4


@dataclass(frozen=True)
class Behavior:
    """Conditional probability table, indexed [u1-1, u2-1, x1-1, x2-1].

    `table` is float64; `exact` optionally carries the same entries as
    Fractions (object ndarray) for certification-grade arithmetic.
    """

    table: np.ndarray
    exact: np.ndarray | None = None
    meta: dict | None = None

    def prob(self, x: tuple[int, int], u: tuple[int, int]) -> float:
        return float(self.table[u[0] - 1, u[1] - 1, x[0] - 1, x[1] - 1])

    def prob_exact(self, x: tuple[int, int], u: tuple[int, int]) -> Fraction:
        if self.exact is None:
            raise ValueError("behavior has no exact table")
        return self.exact[u[0] - 1, u[1] - 1, x[0] - 1, x[1] - 1]

    def to_json(self) -> str:
        return json.dumps(
            {"settings": N_SETTINGS, "outcomes": N_OUTCOMES,
             "table": self.table.reshape(-1).tolist(),
             "meta": self.meta or {}},
            sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "Behavior":
        obj = json.loads(text)
        if obj["settings"] != N_SETTINGS or obj["outcomes"] != N_OUTCOMES:
            raise ValueError("unsupported behavior shape")
        table = np.array(obj["table"], dtype=float).reshape(
            N_SETTINGS, N_SETTINGS, N_OUTCOMES, N_OUTCOMES)
        return Behavior(table=table, meta=obj.get("meta") or None)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    max_normalization_residual: float
    max_signaling_residual: float


def _exact_to_float(exact: np.ndarray) -> np.ndarray:
    return np.array([[[[float(exact[a, b, c, d]) for d in range(N_OUTCOMES)]
                       for c in range(N_OUTCOMES)]
                      for b in range(N_SETTINGS)]
                     for a in range(N_SETTINGS)], dtype=float)


def ideal_quantum_box(model: KSModel) -> Behavior:
    """The maximally violating box, built in exact rational arithmetic.

    table(u1,u2,x1,x2) = <v_a|v_b>^2 / (4 |v_a|^2 |v_b|^2) with
    v_a = vector(u1,x1) and v_b = vector(u2,x2).  Entries are dyadic
    rationals, so the float table carries them exactly.
    """
    exact = np.empty((N_SETTINGS, N_SETTINGS, N_OUTCOMES, N_OUTCOMES), dtype=object)
    for u1 in range(1, N_SETTINGS + 1):
        for u2 in range(1, N_SETTINGS + 1):
            for x1 in range(1, N_OUTCOMES + 1):
                for x2 in range(1, N_OUTCOMES + 1):
                    a = model.vector_at(u1, x1)
                    b = model.vector_at(u2, x2)
                    num = model.inner(a, b) ** 2
                    den = 4 * model.norm_sq(a) * model.norm_sq(b)
                    exact[u1 - 1, u2 - 1, x1 - 1, x2 - 1] = Fraction(num, den)
    return Behavior(table=_exact_to_float(exact), exact=exact,
                    meta={"kind": "ideal"})


def uniform_box() -> Behavior:
    exact = np.full((N_SETTINGS, N_SETTINGS, N_OUTCOMES, N_OUTCOMES),
                    Fraction(1, 16), dtype=object)
    return Behavior(table=np.full((9, 9, 4, 4), 1.0 / 16.0), exact=exact,
                    meta={"kind": "uniform"})


def deterministic_behavior(alice: tuple[int, ...], bob: tuple[int, ...]) -> Behavior:
    """Local deterministic box: outcome (alice[u1-1], bob[u2-1]) w.p. 1."""
    table = np.zeros((N_SETTINGS, N_SETTINGS, N_OUTCOMES, N_OUTCOMES))
    for u1 in range(N_SETTINGS):
        for u2 in range(N_SETTINGS):
            table[u1, u2, alice[u1] - 1, bob[u2] - 1] = 1.0
    return Behavior(table=table, meta={"kind": "deterministic"})


def depolarize(b: Behavior, eta: float) -> Behavior:
    """Mix with white noise: (1-eta) * b + eta * uniform(1/16)."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"noise weight must be in [0,1], got {eta}")
    table = (1.0 - eta) * b.table + eta / 16.0
    exact = None
    if b.exact is not None:
        ef = Fraction(eta).limit_denominator(10 ** 12)
        exact = np.empty_like(b.exact)
        for idx in np.ndindex(exact.shape):
            exact[idx] = (1 - ef) * b.exact[idx] + ef * Fraction(1, 16)
    return Behavior(table=table, exact=exact,
                    meta={"kind": "depolarized", "eta": eta,
                          "base": (b.meta or {}).get("kind")})


def validate_behavior(b: Behavior, tol: float = 1e-12) -> ValidationReport:
    """Report normalization and signaling residuals; ok iff both <= tol."""
    sums = b.table.sum(axis=(2, 3))
    norm_res = float(np.abs(sums - 1.0).max())
    # Alice marginal over x2 should not vary with u2; Bob symmetric.
    alice = b.table.sum(axis=3)            # (u1, u2, x1)
    bob = b.table.sum(axis=2)              # (u1, u2, x2)
    sig_a = float((alice.max(axis=1) - alice.min(axis=1)).max())
    sig_b = float((bob.max(axis=0) - bob.min(axis=0)).max())
    sig_res = max(sig_a, sig_b)
    return ValidationReport(ok=(norm_res <= tol and sig_res <= tol),
                            max_normalization_residual=norm_res,
                            max_signaling_residual=sig_res)


def _measure_array(measure) -> np.ndarray | None:
    """Normalize the measure argument to a (9,9) weight array, or None for
    the counting measure (raw indicator sum)."""
    if measure is None or (isinstance(measure, str) and measure == "uniform"):
        return np.full((N_SETTINGS, N_SETTINGS), 1.0 / 81.0)
    if isinstance(measure, str):
        if measure == "counting":
            return None
        raise ValueError(f"unknown measure {measure!r}")
    if isinstance(measure, dict):
        arr = np.zeros((N_SETTINGS, N_SETTINGS))
        for (u1, u2), w in measure.items():
            arr[u1 - 1, u2 - 1] = w
    else:
        arr = np.asarray(measure, dtype=float)
        if arr.shape != (N_SETTINGS, N_SETTINGS):
            raise ValueError("measure must have shape (9, 9)")
    if abs(arr.sum() - 1.0) > 1e-9:
        raise ValueError("measure is not normalized")
    return arr


def bell_value(b: Behavior, f: BellFunctional, measure=None) -> float:
    """sum_u nu(u) sum_x B(x,u) P(x|u).

    measure: None/"uniform" for equal setting weights, "counting" for the
    raw indicator sum, or an explicit (9,9) array / {(u1,u2): w} dict.
    """
    arr = _measure_array(measure)
    ind = f.indicator_array().astype(float)     # (u1,u2,x1,x2)
    per_setting = (ind * b.table).sum(axis=(2, 3))
    if arr is None:
        return float(per_setting.sum())
    return float((per_setting * arr).sum())


def bell_value_exact(b: Behavior, f: BellFunctional) -> Fraction:
    """Raw indicator sum in exact arithmetic (requires an exact table)."""
    if b.exact is None:
        raise ValueError("behavior has no exact table")
    total = Fraction(0)
    for (x1, x2), (u1, u2) in f.sb:
        total += b.exact[u1 - 1, u2 - 1, x1 - 1, x2 - 1]
    return total


def cumulative_tables(b: Behavior) -> list[list[float]]:
    """Per setting pair, cumulative outcome probabilities in row-major
    (x1 outer, x2 inner) order; the sampling order is fixed so transcripts
    are reproducible bit for bit."""
    cums = []
    for u1 in range(N_SETTINGS):
        for u2 in range(N_SETTINGS):
            flat = b.table[u1, u2].reshape(-1)
            c = np.cumsum(flat).tolist()
            c[-1] = max(c[-1], 1.0)      # guard the last bin against rounding
            cums.append(c)
    return cums


def outcome_from_r(cum: list[float], r: float) -> tuple[int, int]:
    k = bisect_right(cum, r)
    if k > 15:
        k = 15
    return (k // 4 + 1, k % 4 + 1)


def sample_outcome(b: Behavior, u: tuple[int, int], rng: Random) -> tuple[int, int]:
    """One exact categorical draw for setting pair u (components 1..9)."""
    flat = b.table[u[0] - 1, u[1] - 1].reshape(-1)
    cum = np.cumsum(flat).tolist()
    cum[-1] = max(cum[-1], 1.0)
    return outcome_from_r(cum, rng.random())


class DeviceOracle:
    """Round-response interface: respond(k, u) -> (x1, x2).

    k is the 0-based round index; calls must be made in round order.  The
    concrete oracles only ever read the current and past settings.
    """

    def respond(self, k: int, u: tuple[int, int]) -> tuple[int, int]:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class IIDDevice(DeviceOracle):
    """Answers every round from one fixed behavior."""

    def __init__(self, behavior: Behavior, seed: int):
        self.behavior = behavior
        self.seed = seed
        self.rng = Random(seed)
        self._cums = cumulative_tables(behavior)

    def respond(self, k: int, u: tuple[int, int]) -> tuple[int, int]:
        cum = self._cums[(u[0] - 1) * 9 + (u[1] - 1)]
        return outcome_from_r(cum, self.rng.random())

    def spec(self) -> dict:
        return {"kind": "iid", "behavior": (self.behavior.meta or {}),
                "seed": self.seed}


class SwitchAfterDevice(DeviceOracle):
    """Plays behavior b1 for the first k rounds, then b2."""

    def __init__(self, k: int, b1: Behavior, b2: Behavior, seed: int):
        if k < 0:
            raise ValueError("switch round must be >= 0")
        self.k = k
        self.seed = seed
        self.rng = Random(seed)
        self._cums1 = cumulative_tables(b1)
        self._cums2 = cumulative_tables(b2)

    def respond(self, k: int, u: tuple[int, int]) -> tuple[int, int]:
        cums = self._cums1 if k < self.k else self._cums2
        return outcome_from_r(cums[(u[0] - 1) * 9 + (u[1] - 1)], self.rng.random())

    def spec(self) -> dict:
        return {"kind": "switch_after", "k": self.k, "seed": self.seed}


class HistoryTriggerDevice(DeviceOracle):
    """Plays b1 until `pattern` (a tuple of setting pairs) has occurred as a
    contiguous block of *past* settings, then plays b2 from the next round.

    The trigger only ever inspects settings with smaller round index, so the
    time ordering of the no-signaling structure is preserved.
    """

    def __init__(self, pattern, b1: Behavior, b2: Behavior, seed: int):
        self.pattern = tuple(tuple(p) for p in pattern)
        if not self.pattern:
            raise ValueError("pattern must be non-empty")
        self.seed = seed
        self.rng = Random(seed)
        self._cums1 = cumulative_tables(b1)
        self._cums2 = cumulative_tables(b2)
        self._recent: list[tuple[int, int]] = []
        self._triggered = False

    def respond(self, k: int, u: tuple[int, int]) -> tuple[int, int]:
        cums = self._cums2 if self._triggered else self._cums1
        x = outcome_from_r(cums[(u[0] - 1) * 9 + (u[1] - 1)], self.rng.random())
        if not self._triggered:
            self._recent.append(tuple(u))
            if len(self._recent) > len(self.pattern):
                self._recent.pop(0)
            if tuple(self._recent) == self.pattern:
                self._triggered = True
        return x

    def spec(self) -> dict:
        return {"kind": "history_trigger",
                "pattern": [list(p) for p in self.pattern], "seed": self.seed}


def make_iid_device(behavior: Behavior, seed: int = 0) -> IIDDevice:
    return IIDDevice(behavior, seed)


def make_adversarial_device(spec: dict, seed: int = 0) -> DeviceOracle:
    """Build a stateful oracle from a serializable spec.

    Supported kinds: switch_after {k, b1, b2} and history_trigger
    {pattern, b1, b2}; b1/b2 are Behavior objects supplied by the caller.
    """
    kind = spec.get("kind")
    if kind == "switch_after":
        return SwitchAfterDevice(spec["k"], spec["b1"], spec["b2"], seed)
    if kind == "history_trigger":
        return HistoryTriggerDevice(spec["pattern"], spec["b1"], spec["b2"], seed)
    raise ValueError(f"unknown adversarial device kind: {kind!r}")

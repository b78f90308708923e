"""End-to-end protocol execution, parameter selection, the derived security
constants, and Monte Carlo campaigns.

One run: each round draws 8 source bits, maps them to a setting pair, and
queries the device for an outcome pair.  After n rounds two tests are
evaluated in order: the Bell test (the empirical indicator average must not
exceed delta) and then, only if it passed, the tomographic test (the
empirical frequency of the target setting/outcome pair must reach mu1).
Both aborts are verdicts, not errors.  On acceptance, n further bits are
drawn from the same source (the stream positions of setting draws and
extraction draws are disjoint by construction) and fed to the two-source
extractor together with the selected transcript bits.

The parameter constraints mirror the derived security chain: for source
parameter eps and thresholds (mu1, kappa) with 0 < kappa < mu1/2 the Bell
threshold must satisfy

    delta < min( (1/2-eps)^16 / 8,  [(mu1-2kappa)/(2(1-kappa))]^2 / 2 )

which keeps both derived fractions mu2, mu3 large enough that mu4 > 0.  The
constraint check can be switched off explicitly (`enforce_bounds=False`) for
exploratory noise studies; the security report marks such parameter sets as
outside the certified regime.

Architectural notes.  The device oracle is constructed, with its own
generator, before any source bits are drawn, and the two objects share no
state: the device cannot signal to the source and the box is fixed
independently of the source by construction.  A single run is sequential
(outcomes may depend on past settings only); campaigns parallelize across
runs via derived seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import extractor as extractor_mod
from .boxes import Behavior, DeviceOracle
from .bounds import markov_split_epsilon
from .ks_bell import BellFunctional, build_bell_functional, build_ks_model
from .seeding import derive_seed
from .sv_source import BITS_PER_ROUND, DEFAULT_MAP, SettingMap, SVSource

FORMAT_VERSION = 1


@lru_cache(maxsize=1)
def default_functional() -> BellFunctional:
    return build_bell_functional(build_ks_model())


def select_params(eps: float, mu1: float, kappa: float) -> float:
    """Largest admissible Bell threshold for the given source and
    tomography parameters (exclusive upper end of the valid range)."""
    if not 0 <= eps < 0.5:
        raise ValueError("source parameter must be in [0, 1/2)")
    if not 0 < kappa < mu1 / 2:
        raise ValueError("need 0 < kappa < mu1/2")
    a = (0.5 - eps) ** 16 / 8.0
    b = 0.5 * ((mu1 - 2.0 * kappa) / (2.0 * (1.0 - kappa))) ** 2
    return min(a, b)


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    eps: float = 0.0
    delta: float = 1e-8
    mu1: float = 5e-4
    kappa: float = 1e-4
    mapping: SettingMap = DEFAULT_MAP
    extractor: extractor_mod.ExtractorConfig = field(
        default_factory=extractor_mod.ExtractorConfig)
    enforce_bounds: bool = True

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one round")
        if self.delta <= 0 or self.mu1 <= 0:
            raise ValueError("thresholds must be positive")
        if self.enforce_bounds:
            dmax = select_params(self.eps, self.mu1, self.kappa)
            if not self.delta < dmax:
                raise ValueError(
                    f"delta {self.delta} not below the admissible bound {dmax}")

    def in_certified_regime(self) -> bool:
        try:
            return self.delta < select_params(self.eps, self.mu1, self.kappa)
        except ValueError:
            return False

    def to_dict(self) -> dict:
        return {"n": self.n, "eps": self.eps, "delta": self.delta,
                "mu1": self.mu1, "kappa": self.kappa,
                "map": self.mapping.name,
                "extractor": {"m": self.extractor.m, "L": self.extractor.L,
                              "rule": self.extractor.rule,
                              "xi": self.extractor.xi},
                "enforce_bounds": self.enforce_bounds}


@dataclass
class ProtocolRun:
    params: dict
    device_spec: dict
    source_spec: dict
    n: int
    bell_count: int
    target_count: int
    verdict: str
    target_settings: tuple[int, int]
    target_outcomes: tuple[int, int]
    records: list[tuple[int, int, int, int]] | None = None
    output_bits: list[int] | None = None
    extraction: dict | None = None

    @property
    def bell_average(self) -> float:        # the Bell-test statistic
        return self.bell_count / self.n

    @property
    def target_frequency(self) -> float:    # the tomography statistic
        return self.target_count / self.n


def _verdict(bell_average: float, target_frequency: float,
             delta: float, mu1: float) -> str:
    """Ordered tests: the Bell test is evaluated first; the tomography test
    only applies to runs that survived it."""
    if not bell_average <= delta:
        return "AbortBell"
    if not target_frequency >= mu1:
        return "AbortTomography"
    return "Accept"


def run_protocol(device: DeviceOracle, source: SVSource, params: ProtocolParams,
                 functional: BellFunctional | None = None,
                 keep_transcript: bool = True,
                 run_extraction: bool = True) -> ProtocolRun:
    """Execute one full run; aborts are verdicts.

    The transcript is fully reproducible from (device spec, source spec,
    seeds): rounds consume exactly 8 source bits plus one device draw, in
    round order, and extraction consumes exactly n further source bits.
    """
    params.validate()
    f = functional or default_functional()
    mapping = params.mapping
    bell_codes = frozenset(((u1 - 1) * 9 + (u2 - 1)) * 16 + (x1 - 1) * 4 + (x2 - 1)
                           for (x1, x2), (u1, u2) in f.sb)
    (x1t, x2t), (u1t, u2t) = f.d_target
    target_code = ((u1t - 1) * 9 + (u2t - 1)) * 16 + (x1t - 1) * 4 + (x2t - 1)
    target_pair = (u1t, u2t)

    n = params.n
    bell_count = 0
    target_count = 0
    records: list[tuple[int, int, int, int]] | None = [] if keep_transcript else None
    target_round_bits: list[int] = []
    want_target_bits = run_extraction and params.extractor.rule == "target_rounds"

    for k in range(n):
        block = source.next_block(BITS_PER_ROUND)
        u = mapping.map_block(block)
        x = device.respond(k, u)
        code = ((u[0] - 1) * 9 + (u[1] - 1)) * 16 + (x[0] - 1) * 4 + (x[1] - 1)
        if code in bell_codes:
            bell_count += 1
        if code == target_code:
            target_count += 1
        if records is not None:
            records.append((u[0], u[1], x[0], x[1]))
        if want_target_bits and u == target_pair:
            target_round_bits.extend(extractor_mod.encode_outcome_bits(x[0], x[1]))

    verdict = _verdict(bell_count / n, target_count / n, params.delta, params.mu1)
    run = ProtocolRun(params=params.to_dict(), device_spec=device.spec(),
                      source_spec=source.spec(), n=n,
                      bell_count=bell_count, target_count=target_count,
                      verdict=verdict, target_settings=target_pair,
                      target_outcomes=(x1t, x2t), records=records)
    if verdict == "Accept" and run_extraction:
        t_bits = source.next_bits(n)
        cfg = params.extractor
        if cfg.rule == "target_rounds":
            x_bits = target_round_bits
        else:
            if records is None:
                raise ValueError("all_rounds extraction needs a kept transcript")
            x_bits = extractor_mod.transcript_to_source(run, "all_rounds")
        if not x_bits:
            raise ValueError("no device bits selected for extraction")
        run.output_bits = extractor_mod.extract(x_bits, t_bits, cfg)
        # Honest device-side rate: at most 1/4 on any outcome pair at the
        # target setting for the ideal box, so 2 bits per 4 encoded.  The
        # certified worst-case rate spreads the accepted-run min-entropy
        # floor over the selected bits; at desk scale it is vanishing and
        # the report says so rather than hiding it.
        rate_t = -math.log2(0.5 + params.eps) if params.eps < 0.5 else 0.0
        certified = security_report(params).min_entropy_bound / len(x_bits)
        run.extraction = extractor_mod.extraction_report(
            len(x_bits), len(t_bits), cfg,
            honest_rate_x=0.5, rate_t=rate_t, certified_rate_x=certified)
    return run


def expected_tomography_rate(b: Behavior, measure=None,
                             mapping: SettingMap = DEFAULT_MAP,
                             functional: BellFunctional | None = None) -> float:
    """nu(target settings) * P(target outcomes | target settings).

    With measure None the setting distribution induced by uniform bits
    through the map is used (preimage counting); an explicit (9,9) array is
    also accepted.
    """
    f = functional or default_functional()
    (x1t, x2t), (u1t, u2t) = f.d_target
    if measure is None:
        nu = mapping.pair_preimage_count((u1t, u2t)) / 2.0 ** BITS_PER_ROUND
    else:
        arr = np.asarray(measure, dtype=float)
        nu = float(arr[u1t - 1, u2t - 1])
    return nu * b.prob((x1t, x2t), (u1t, u2t))


@dataclass(frozen=True)
class SecurityReport:
    """Derived security constants for a parameter set.

    mu2 = 1 - sqrt(2 delta)          surviving fraction after the Bell side
    mu3 = (mu1-2k)/(2(1-k))          qualifying fraction from the tomography side
    mu4 = mu2 + mu3 - 1              rounds with both properties
    gamma = max(1-k, (3 + 2 sqrt(2 delta)/(1/2-eps)^8)/4)
                                     per-round max outcome probability
    eps_az1 = 2 exp(-n delta^2/4), eps_az2 = 2 exp(-n mu1^2/16)
    delta1 = 2(eps_az1+eps_az2) + gamma^(mu4 n)
    min_entropy_bound = mu4 n log2(1/gamma)

    The deviation parameter of the Bell-side tail is set equal to delta
    itself (no separate knob).  mu4 is computed as mu3 - sqrt(2 delta),
    algebraically identical to mu2 + mu3 - 1 but immune to cancellation.
    """

    n: int
    eps: float
    delta: float
    mu1: float
    kappa: float
    mu2: float
    mu3: float
    mu4: float
    gamma: float
    eps_az1: float
    eps_az2: float
    delta1: float
    min_entropy_bound: float
    zeta: float
    guaranteed_target_fraction: float
    target_fraction_failure_bound: float
    q_acc: float
    output_bias_bound: float
    guarantee_probability: float
    max_white_noise: float
    params_valid: bool
    map_name: str

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def security_report(params: ProtocolParams, q_acc: float = 1.0) -> SecurityReport:
    """All derived constants, recomputable from (n, eps, delta, mu1, kappa).

    The headline guarantee: with probability at least
    1 - sqrt(delta1/q_acc) over accepted transcripts, every outcome sequence
    has conditional probability at most sqrt(delta1/q_acc).  At desk-scale n
    the numbers are typically vacuous (delta1 is near 8); they are reported
    faithfully rather than beautified.
    """
    n, eps, delta, mu1, kappa = params.n, params.eps, params.delta, params.mu1, params.kappa
    sqrt2d = math.sqrt(2.0 * delta)
    mu2 = 1.0 - sqrt2d
    mu3 = (mu1 - 2.0 * kappa) / (2.0 * (1.0 - kappa))
    mu4 = mu3 - sqrt2d
    gamma = max(1.0 - kappa,
                (3.0 + 2.0 * sqrt2d / (0.5 - eps) ** 8) / 4.0)
    eps_az1 = markov_split_epsilon(n, delta)
    eps_az2 = markov_split_epsilon(n, mu1 / 2.0)
    tail = math.exp(mu4 * n * math.log(gamma)) if 0 < gamma < 1 else 1.0
    delta1 = 2.0 * (eps_az1 + eps_az2) + tail
    hmin = mu4 * n * (-math.log2(gamma)) if 0 < gamma < 1 else 0.0
    zeta = 1.0 - (0.5 - eps) ** 8
    mu5 = (0.5 - eps) ** 8 / 2.0
    chernoff_fail = math.exp(-2.0 * n * (1.0 - mu5 - zeta) ** 2)
    ratio = delta1 / q_acc if q_acc > 0 else math.inf
    sqrt_term = math.sqrt(ratio) if ratio != math.inf else math.inf
    return SecurityReport(
        n=n, eps=eps, delta=delta, mu1=mu1, kappa=kappa,
        mu2=mu2, mu3=mu3, mu4=mu4, gamma=gamma,
        eps_az1=eps_az1, eps_az2=eps_az2, delta1=delta1,
        min_entropy_bound=hmin, zeta=zeta,
        guaranteed_target_fraction=mu5,
        target_fraction_failure_bound=chernoff_fail,
        q_acc=q_acc,
        output_bias_bound=min(1.0, sqrt_term),
        guarantee_probability=max(0.0, 1.0 - sqrt_term),
        # white-noise weight at which the expected Bell statistic under
        # equal setting weights reaches delta (504/1296 per unit weight)
        max_white_noise=delta / (504.0 / 1296.0),
        params_valid=params.in_certified_regime(),
        map_name=params.mapping.name)


def dc_distance(p_szew: np.ndarray, acc_weights: np.ndarray | None = None,
                tol: float = 1e-9) -> dict:
    """Composable distance of a toy output box from the ideal box that is
    uniform on s and independent of (z, e), conditioned on acceptance.

    p_szew[s, z, e, w] = p(s, z, e | w), normalized over (s, z, e) per w;
    acc_weights, if given, carries per-cell acceptance probabilities and the
    table is conditioned on acceptance first.

    Returns dc = sum_{s,e} max_w sum_z |p(s,z,e|w,ACC) - p(z,e|w,ACC)/|S||,
    the per-adversary-input summary d (per-e maximized), and verifies
    dc <= |S| d.
    """
    p = np.asarray(p_szew, dtype=float)
    if p.ndim != 4:
        raise ValueError("expected a 4-axis table p[s, z, e, w]")
    if acc_weights is not None:
        a = np.asarray(acc_weights, dtype=float)
        if a.shape != p.shape or np.any((a < 0) | (a > 1)):
            raise ValueError("acceptance weights must match the table in [0,1]")
        p = p * a
    sums = p.sum(axis=(0, 1, 2))
    if np.any(sums <= 0):
        raise ValueError("a conditioning input has zero acceptance mass")
    if acc_weights is None and np.any(np.abs(sums - 1.0) > tol):
        raise ValueError("table not normalized per adversary input")
    p = p / sums                                  # condition on acceptance
    n_s = p.shape[0]
    marg_ze = p.sum(axis=0)                       # (z, e, w)
    diff = np.abs(p - marg_ze[None, :, :, :] / n_s)
    dc = float(diff.sum(axis=1).max(axis=2).sum())    # sum_s,e max_w sum_z
    inner = diff.sum(axis=0).sum(axis=0)          # (e, w): sum_{s,z}
    d = float(inner.max(axis=1).sum())            # per-e max over w
    return {"dc": dc, "d": d, "s_cardinality": n_s,
            "relation_ok": dc <= n_s * d + 1e-9}


@dataclass
class CampaignStats:
    trials: int
    accept_count: int
    accept_rate: float
    ci_low: float
    ci_high: float
    rows: list[dict]
    verdict_counts: dict[str, int]
    master_seed: int

    def to_csv(self) -> str:
        lines = ["trial,Ln,Sn,verdict"]
        for r in self.rows:
            lines.append(f"{r['trial']},{r['Ln']!r},{r['Sn']!r},{r['verdict']}")
        return "\n".join(lines) + "\n"


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def monte_carlo(device_factory: Callable[[int], DeviceOracle],
                source_factory: Callable[[int], SVSource],
                params: ProtocolParams, trials: int, master_seed: int = 0,
                functional: BellFunctional | None = None) -> CampaignStats:
    """Independent runs with derived per-trial seeds.

    Trial t uses device seed derive_seed(master, t, 1) and source seed
    derive_seed(master, t, 2); aggregation is order-independent and the
    whole campaign is a pure function of (specs, params, master seed).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rows = []
    verdicts: dict[str, int] = {}
    accept = 0
    for t in range(trials):
        device = device_factory(derive_seed(master_seed, t, 1))
        source = source_factory(derive_seed(master_seed, t, 2))
        run = run_protocol(device, source, params, functional=functional,
                           keep_transcript=False, run_extraction=False)
        rows.append({"trial": t, "Ln": run.bell_average,
                     "Sn": run.target_frequency, "verdict": run.verdict})
        verdicts[run.verdict] = verdicts.get(run.verdict, 0) + 1
        if run.verdict == "Accept":
            accept += 1
    lo, hi = wilson_interval(accept, trials)
    return CampaignStats(trials=trials, accept_count=accept,
                         accept_rate=accept / trials, ci_low=lo, ci_high=hi,
                         rows=rows, verdict_counts=verdicts,
                         master_seed=master_seed)


# --- transcript files -----------------------------------------------------


def write_transcript(run: ProtocolRun, path, config_hash: str = "",
                     package_version: str = "") -> None:
    """JSON Lines: header, one record per round, summary."""
    if run.records is None:
        raise ValueError("run has no kept transcript")
    with open(path, "w") as fh:
        header = {"type": "header", "version": FORMAT_VERSION,
                  "package_version": package_version,
                  "config_hash": config_hash, "params": run.params,
                  "device": run.device_spec, "source": run.source_spec}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, (u1, u2, x1, x2) in enumerate(run.records, start=1):
            fh.write(json.dumps({"i": i, "u": [u1, u2], "x": [x1, x2]}) + "\n")
        summary = {"type": "summary", "Ln": run.bell_average,
                   "Sn": run.target_frequency, "verdict": run.verdict}
        if run.output_bits is not None:
            bits = "".join(map(str, run.output_bits))
            summary["output_hex"] = f"{int(bits, 2):0{(len(bits) + 3) // 4}x}"
            summary["extraction"] = run.extraction
        fh.write(json.dumps(summary, sort_keys=True) + "\n")


def read_transcript(path) -> tuple[dict, list[tuple[int, int, int, int]], dict]:
    header = None
    summary = None
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: malformed JSON: {e}") from e
            if obj.get("type") == "header":
                header = obj
            elif obj.get("type") == "summary":
                summary = obj
            else:
                records.append((obj["u"][0], obj["u"][1], obj["x"][0], obj["x"][1]))
    if header is None or summary is None:
        raise ValueError(f"{path}: missing header or summary record")
    return header, records, summary


def replay_transcript(records, delta: float, mu1: float,
                      functional: BellFunctional | None = None) -> dict:
    """Recompute the statistics and verdict of a stored transcript."""
    f = functional or default_functional()
    n = len(records)
    if n == 0:
        raise ValueError("empty transcript")
    bell = sum(1 for (u1, u2, x1, x2) in records
               if ((x1, x2), (u1, u2)) in f.sb)
    (x1t, x2t), (u1t, u2t) = f.d_target
    tgt = sum(1 for r in records if r == (u1t, u2t, x1t, x2t))
    return {"Ln": bell / n, "Sn": tgt / n,
            "verdict": _verdict(bell / n, tgt / n, delta, mu1)}

"""Round-level seeded simulation of the heralded secret-sharing protocol.

Rounds are sampled by :mod:`spsqss._kernels` into flat per-round arrays;
everything here is sifting, estimation and reporting on those arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from spsqss import _kernels
from spsqss.heralding import (
    PATTERNS,
    Verdict,
    collapsed_joint_state,
    gsm_click_distribution,
    heralding_probability,
    pattern_name,
)
from spsqss.keyrate import ChannelConfig
from spsqss.noise import (
    CHSH_TERMS,
    SECURITY_TRIPLES,
    LossPolicy,
    Strategy,
    chsh_from_conditionals,
    chsh_value,
    total_qber,
)
from spsqss.polarization import ghz_correlator

FAST_PATH_MIN_ROUNDS = 10**6
VALUE_OF = np.array([1.0, -1.0, 0.0])


class SiftCase(str, Enum):
    SECURITY = "SecurityCheck"
    KEYGEN = "KeyGen"
    DISCARD = "Discard"
    NOT_HERALDED = "NotHeralded"


def sift_case(i: int, j: int, k: int) -> SiftCase:
    """Basis-table classification of one heralded setting triple."""
    if i not in (1, 2) or j not in (1, 2, 3) or k not in (1, 2):
        raise ValueError(f"invalid setting triple {(i, j, k)}")
    if j in (2, 3):
        return SiftCase.SECURITY
    return SiftCase.KEYGEN if i == k else SiftCase.DISCARD


@dataclass(frozen=True)
class SimConfig:
    rounds: int
    seed: int = 0
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    announce_fraction: float = 0.5
    bob_probs: tuple = (1 / 3, 1 / 3, 1 / 3)
    path: str = "auto"  # "fast", "optics" or "auto"

    def __post_init__(self):
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError(f"rounds must be a positive integer, got {self.rounds}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0.0 < self.announce_fraction <= 1.0:
            raise ValueError(f"announce_fraction must lie in (0, 1], got {self.announce_fraction}")
        bp = tuple(float(x) for x in self.bob_probs)
        if len(bp) != 3 or min(bp) < 0 or abs(sum(bp) - 1.0) > 1e-12:
            raise ValueError(f"bob_probs must be three probabilities summing to 1, got {bp}")
        object.__setattr__(self, "bob_probs", bp)
        if self.path not in ("auto", "fast", "optics"):
            raise ValueError(f"path must be auto, fast or optics, got {self.path!r}")

    @property
    def resolved_path(self) -> str:
        if self.path != "auto":
            return self.path
        return "fast" if self.rounds >= FAST_PATH_MIN_ROUNDS else "optics"


@dataclass(frozen=True)
class Estimate:
    value: float | None
    se: float | None
    n: int

    def z(self, expected: float) -> float | None:
        if self.value is None:
            return None
        if not self.se:
            return 0.0 if self.value == expected else math.copysign(math.inf, self.value - expected)
        return float((self.value - expected) / self.se)


def _binomial(successes: int, n: int) -> Estimate:
    if n == 0:
        return Estimate(None, None, 0)
    p = successes / n
    return Estimate(p, math.sqrt(p * (1.0 - p) / n), n)


@dataclass(frozen=True)
class SimEstimates:
    rounds: int
    heralded: int
    P_d: Estimate
    sift: dict  # case name -> Estimate (fraction of heralded rounds)
    correlators: dict  # "ijk" -> Estimate
    S_ABC: Estimate
    S: Estimate
    delta: Estimate
    raw_key_length: int
    reconstruction_failure: Estimate
    status: str  # "ok", "terminate" or "insufficient"
    message: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RoundRecord:
    index: int
    herald: Verdict
    pattern: str | None
    settings: tuple | None
    outcomes: tuple | None  # +1, -1 or None for a no-click
    lost: tuple | None
    sift_case: SiftCase
    key_bits: tuple | None
    flipped: bool = False
    announced: bool = False

    def as_json(self) -> str:
        d = asdict(self)
        d["herald"] = self.herald.value
        d["sift_case"] = self.sift_case.value
        return json.dumps(d, separators=(",", ":"))


# --------------------------------------------------------------------------
# sampling set-up


def _pattern_tables(T: float):
    # index 0..7 are coincidence patterns, 8 is every other event
    entries = gsm_click_distribution(collapsed_joint_state(T, 1.0))
    probs = np.array([e.probability for e in entries])
    code = {Verdict.FAIL: _kernels.HERALD_FAIL, Verdict.PLUS: _kernels.HERALD_PLUS, Verdict.MINUS: _kernels.HERALD_MINUS}
    cls = np.array([code[e.herald] for e in entries], dtype=np.int8)
    heralded = np.where(cls != _kernels.HERALD_FAIL, probs, 0.0)
    return _cdf(probs), cls, _cdf(heralded)


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p) / p.sum()
    c[np.flatnonzero(p > 0)[-1]:] = 1.0
    return c


def _plus_table() -> np.ndarray:
    t = np.zeros((2, 3, 2))
    for i in (1, 2):
        for j in (1, 2, 3):
            for k in (1, 2):
                t[i - 1, j - 1, k - 1] = 0.5 * (1.0 + ghz_correlator(i, j, k))
    return t


def kernel_params(config: SimConfig) -> dict:
    ch = config.channel
    pat_cdf, pat_class, herald_cdf = _pattern_tables(ch.T)
    bob = np.cumsum(config.bob_probs)[:2]
    return {
        "seed": np.uint64(config.seed),
        "fast": config.resolved_path == "fast",
        "p_d": heralding_probability(ch.T, ch.eta_t),
        "T": ch.T,
        "eta_t": ch.eta_t,
        "pat_cdf": pat_cdf,
        "pat_class": pat_class,
        "herald_cdf": herald_cdf,
        "p_a": ch.p,
        "bob_cdf": bob,
        "p_c": ch.p,
        "eta_l": ch.eta_l,
        "F": ch.F,
        "pplus": _plus_table(),
        "random_assign": ch.strategy.loss_policy is LossPolicy.RANDOM_ASSIGN,
        "advanced": ch.strategy is Strategy.ADVANCED,
        "q": ch.q if ch.strategy is Strategy.ADVANCED else 0.0,
        "announce": config.announce_fraction,
    }


def sample_rounds(config: SimConfig, backend: str | None = None) -> dict:
    """Per-round arrays (see ``_kernels.OUTPUT_FIELDS``) for the whole run."""
    backend = backend or _kernels.default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return _kernels.run_rounds(config.rounds, kernel_params(config), backend)


# --------------------------------------------------------------------------
# sifting and estimation


def sift(arrays: dict) -> dict:
    """Boolean masks for the three cases over heralded rounds."""
    her = arrays["herald"] != _kernels.HERALD_FAIL
    i, j, k = arrays["i"], arrays["j"], arrays["k"]
    security = her & ((j == 2) | (j == 3))
    keygen = her & (j == 1) & (i == k)
    discard = her & (j == 1) & (i != k)
    return {SiftCase.SECURITY: security, SiftCase.KEYGEN: keygen, SiftCase.DISCARD: discard}


def _mean_estimate(x: np.ndarray) -> Estimate:
    n = x.size
    if n == 0:
        return Estimate(None, None, 0)
    m = float(x.mean())
    var = float((x * x).mean()) - m * m
    return Estimate(m, math.sqrt(max(var, 0.0) / n), n)


def estimate_nonlocality(arrays: dict, security: np.ndarray):
    """Tri-correlators, Svetlichny value and Charlie-conditioned CHSH value.

    Returns ``(correlators, S_ABC, S, message)``; the two values are ``None``
    estimates when some setting cell has no samples.
    """
    va, vb, vc = (VALUE_OF[arrays[x][security]] for x in ("a", "b", "c"))
    i, j, k = (arrays[x][security] for x in ("i", "j", "k"))
    prod = va * vb * vc
    correlators, missing = {}, []
    for t in SECURITY_TRIPLES:
        sel = (i == t[0]) & (j == t[1]) & (k == t[2])
        est = _mean_estimate(prod[sel])
        correlators["".join(map(str, t))] = est
        if est.n == 0:
            missing.append(t)
    n = int(security.sum())
    if missing:
        none = Estimate(None, None, n)
        return correlators, none, none, f"insufficient data: no samples for triples {missing}"

    s_abc, var = 0.0, 0.0
    for kk in (1, 2):
        for (ii, jj), coef in CHSH_TERMS[kk].items():
            e = correlators[f"{ii}{jj}{kk}"]
            s_abc += coef * e.value
            var += e.se**2
    S_ABC = Estimate(s_abc, math.sqrt(var), n)

    conditionals, weights = {}, {}
    for kk in (1, 2):
        on_k = k == kk
        for c_val, c_idx in ((1, 0), (-1, 1)):
            on_c = on_k & (arrays["c"][security] == c_idx)
            weights[(kk, c_val)] = float(on_c.sum()) / max(int(on_k.sum()), 1)
            cond = {}
            for (ii, jj) in CHSH_TERMS[kk]:
                sel = on_c & (i == ii) & (j == jj)
                if not sel.any():
                    none = Estimate(None, None, n)
                    return correlators, S_ABC, none, f"insufficient data: no samples with c{kk} = {c_val:+d} for A{ii}B{jj}"
                cond[(ii, jj)] = float((va[sel] * vb[sel]).mean())
            conditionals[(kk, c_val)] = cond
    chsh = chsh_from_conditionals(conditionals, weights)
    # the weighted conditional sum tracks S_ABC / 2, so its error does too
    return correlators, S_ABC, Estimate(chsh.value, S_ABC.se / 2.0, n), ""


def keygen_and_reconstruct(arrays: dict, keygen: np.ndarray):
    """QBER on the announced subset and the XOR reconstruction check on the rest.

    Outcome +1 maps to bit 0 and -1 to bit 1. Announced rounds with a no-click
    count as errors. Returns ``(delta, raw_key_length, failure_rate, raw_keys)``
    with ``raw_keys`` a ``(n, 3)`` array of ``(k_A, k_B, k_C)``.
    """
    a, b, c = arrays["a"], arrays["b"], arrays["c"]
    lost = (a == _kernels.LOST) | (b == _kernels.LOST) | (c == _kernels.LOST)
    wrong = ((a ^ b ^ c) & 1).astype(bool) & ~lost
    ann = keygen & arrays["announced"].astype(bool)
    delta = _binomial(int((lost | wrong)[ann].sum()), int(ann.sum()))
    raw = keygen & ~ann & ~lost
    keys = np.stack([a[raw], b[raw], c[raw]], axis=1)
    fail = _binomial(int(wrong[raw].sum()), int(raw.sum()))
    return delta, int(raw.sum()), fail, keys


def estimate(config: SimConfig, arrays: dict) -> SimEstimates:
    n = config.rounds
    herald_mask = arrays["herald"] != _kernels.HERALD_FAIL
    heralded = int(herald_mask.sum())
    masks = sift(arrays)
    sift_est = {case.value: _binomial(int(m.sum()), heralded) for case, m in masks.items()}
    correlators, S_ABC, S, message = estimate_nonlocality(arrays, masks[SiftCase.SECURITY])
    delta, raw_len, failure, _ = keygen_and_reconstruct(arrays, masks[SiftCase.KEYGEN])
    if S_ABC.value is None or S.value is None:
        status = "insufficient"
    elif S_ABC.value <= 4.0:
        status = "terminate"
        message = f"S_ABC = {S_ABC.value:.6g} <= 4: communication terminated"
    else:
        status = "ok"
    if status != "insufficient" and delta.n == 0:
        status, message = "insufficient", "insufficient data: no announced key-generation rounds"
    return SimEstimates(n, heralded, _binomial(heralded, n), sift_est, correlators, S_ABC, S, delta, raw_len, failure, status, message)


def records(arrays: dict, start: int = 0, stop: int | None = None):
    """Yield :class:`RoundRecord` objects for rounds ``start..stop-1``."""
    stop = arrays["herald"].size if stop is None else stop
    verdicts = {_kernels.HERALD_FAIL: Verdict.FAIL, _kernels.HERALD_PLUS: Verdict.PLUS, _kernels.HERALD_MINUS: Verdict.MINUS}
    for r in range(start, stop):
        h = verdicts[int(arrays["herald"][r])]
        if h is Verdict.FAIL:
            yield RoundRecord(r, h, None, None, None, None, SiftCase.NOT_HERALDED, None)
            continue
        pat = int(arrays["pattern"][r])
        t = (int(arrays["i"][r]), int(arrays["j"][r]), int(arrays["k"][r]))
        out = tuple(int(arrays[x][r]) for x in ("a", "b", "c"))
        case = sift_case(*t)
        key_bits = out if case is SiftCase.KEYGEN and _kernels.LOST not in out else None
        lost_bits = int(arrays["lost"][r])
        yield RoundRecord(
            r, h, pattern_name(PATTERNS[pat]) if pat < len(PATTERNS) else None, t,
            tuple(None if o == _kernels.LOST else (1, -1)[o] for o in out),
            tuple(bool(lost_bits >> m & 1) for m in range(3)),
            case, key_bits, bool(arrays["flipped"][r]), bool(arrays["announced"][r]),
        )


def write_round_log(arrays: dict, fp) -> int:
    """One JSON object per line; returns the number of lines written."""
    n = 0
    for rec in records(arrays):
        fp.write(rec.as_json() + "\n")
        n += 1
    return n


def simulate(config: SimConfig, keep_rounds: bool = False, backend: str | None = None):
    """Run the protocol; returns ``(SimEstimates, arrays or None)``."""
    arrays = sample_rounds(config, backend)
    return estimate(config, arrays), (arrays if keep_rounds else None)


# --------------------------------------------------------------------------
# analytic oracle


def analytic_expectations(config: SimConfig) -> dict:
    """Closed-form values the estimates should scatter around."""
    ch = config.channel
    noise = ch.noise
    S = chsh_value(noise)
    q = ch.q if ch.strategy is Strategy.ADVANCED else 0.0
    b1, b2, b3 = config.bob_probs
    p, pb = ch.p, 1.0 - ch.p
    e3 = noise.eta_l**3
    if ch.strategy is Strategy.NONE:
        recon = 0.5 * (1.0 - noise.F)
    else:
        recon = total_qber(noise, ch.strategy, q)
    return {
        "P_d": heralding_probability(ch.T, ch.eta_t),
        "S": S,
        "S_ABC": 2.0 * S,
        "delta": total_qber(noise, ch.strategy, q),
        "reconstruction_failure": recon if e3 > 0 else float("nan"),
        "sift": {
            SiftCase.SECURITY.value: b2 + b3,
            SiftCase.KEYGEN.value: b1 * (p * p + pb * pb),
            SiftCase.DISCARD.value: b1 * 2.0 * p * pb,
        },
    }


def z_scores(est: SimEstimates, expected: dict) -> dict:
    out = {
        "P_d": est.P_d.z(expected["P_d"]),
        "S": est.S.z(expected["S"]),
        "S_ABC": est.S_ABC.z(expected["S_ABC"]),
        "delta": est.delta.z(expected["delta"]),
        "reconstruction_failure": est.reconstruction_failure.z(expected["reconstruction_failure"]),
    }
    for name, val in expected["sift"].items():
        out[f"sift_{name}"] = est.sift[name].z(val)
    return out


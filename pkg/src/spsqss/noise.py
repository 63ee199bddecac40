"""White-noise / local-loss outcome model and the quantities built on it.

Outcome tables are (3, 3, 3) arrays indexed ``[a, b, c]`` with index 0 for +1,
1 for -1 and 2 for a no-click (``LOST``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import product

import numpy as np

from spsqss.heralding import GHZ_PLUS
from spsqss.polarization import SETTINGS, born_distribution, ghz_state

SQRT2 = np.sqrt(2.0)
LOST = 2
VALUES = np.array([1.0, -1.0, 0.0])  # numeric value per outcome index; a loss scores 0
TABLE_TOL = 1e-12


class LossPolicy(str, Enum):
    RAW_PERP = "raw"
    RANDOM_ASSIGN = "random"


class Strategy(str, Enum):
    NONE = "none"
    POSTSELECT = "post"
    ADVANCED = "advanced"

    @property
    def loss_policy(self) -> LossPolicy:
        return LossPolicy.RAW_PERP if self is Strategy.NONE else LossPolicy.RANDOM_ASSIGN


@dataclass(frozen=True)
class NoiseParams:
    F: float
    eta_l: float

    def __post_init__(self):
        for name in ("F", "eta_l"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {x}")

    @property
    def eta_bar(self) -> float:
        return 1.0 - self.eta_l


# Case-1 triples (i, j, k) and CHSH coefficients per Charlie setting. Charlie's C1
# pairs with S_AB and C2 with S'_AB: with A2 = sy and C2 = -sy this is the pairing
# under which |GHZ_1^+> reaches 4*sqrt(2).
CHSH_TERMS = {
    1: {(1, 2): 1.0, (2, 2): 1.0, (1, 3): 1.0, (2, 3): -1.0},
    2: {(2, 3): 1.0, (2, 2): 1.0, (1, 3): 1.0, (1, 2): -1.0},
}
SECURITY_TRIPLES = tuple((i, j, k) for k in (1, 2) for (i, j) in CHSH_TERMS[k])
KEY_TRIPLES = ((1, 1, 1), (2, 1, 2))
DISCARD_TRIPLES = ((1, 1, 2), (2, 1, 1))


def _settings(triple):
    i, j, k = triple
    return SETTINGS[f"A{i}"], SETTINGS[f"B{j}"], SETTINGS[f"C{k}"]


@dataclass(frozen=True)
class OutcomeDistribution:
    triple: tuple
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.shape != (3, 3, 3):
            raise ValueError(f"outcome table must be 3x3x3, got {t.shape}")
        if (t < -TABLE_TOL).any():
            raise ValueError("negative probability in outcome table")
        if abs(t.sum() - 1.0) > TABLE_TOL:
            raise ValueError(f"outcome table sums to {t.sum():.15f}")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def correlator(self) -> float:
        """P(abc = +1) - P(abc = -1); any loss contributes to neither."""
        return float(np.einsum("abc,a,b,c->", self.table, VALUES, VALUES, VALUES))

    def lost_marginal(self, party: int) -> float:
        return float(np.take(self.table, LOST, axis=party).sum())

    def charlie_marginal(self) -> np.ndarray:
        return self.table.sum(axis=(0, 1))

    def conditional_pair_correlator(self, c: int) -> float:
        """E[a b | Charlie's outcome index ``c``]; a lost a or b scores 0."""
        pc = self.table[:, :, c].sum()
        if pc == 0.0:
            return 0.0
        return float(VALUES @ self.table[:, :, c] @ VALUES / pc)


def _delivered_table(noise: NoiseParams, triple) -> np.ndarray:
    born = born_distribution(ghz_state(GHZ_PLUS), _settings(triple))
    return noise.F * born + (1.0 - noise.F) / 8.0


def outcome_distribution(
    noise: NoiseParams, triple, loss_policy: LossPolicy = LossPolicy.RAW_PERP
) -> OutcomeDistribution:
    """Outcome table for one basis triple ``(i, j, k)``.

    Each party independently loses its photon with probability ``1 - eta_l``.
    With all three delivered the statistics are those of
    ``F |GHZ><GHZ| + (1-F) I/8``; with only some delivered, the delivered parties
    see uniform, uncorrelated +-1 (the reduced states are diagonal in H/V and
    every setting is equatorial). ``RANDOM_ASSIGN`` replaces each loss by a
    fair coin.
    """
    triple = tuple(triple)
    if len(triple) != 3 or triple[0] not in (1, 2) or triple[1] not in (1, 2, 3) or triple[2] not in (1, 2):
        raise ValueError(f"invalid setting triple {triple}")
    eta, bar = noise.eta_l, noise.eta_bar
    full = _delivered_table(noise, triple)
    table = np.zeros((3, 3, 3))
    for mask in product((True, False), repeat=3):
        w = np.prod([eta if m else bar for m in mask])
        if w == 0.0:
            continue
        n_del = sum(mask)
        for idx in product(*[(0, 1) if m else (LOST,) for m in mask]):
            p = full[idx] if n_del == 3 else 0.5**n_del
            table[idx] += w * p
    if loss_policy is LossPolicy.RANDOM_ASSIGN:
        table = _random_assign(table)
    return OutcomeDistribution(triple, table)


def _random_assign(table: np.ndarray) -> np.ndarray:
    out = table.copy()
    for axis in range(3):
        lost = np.take(out, [LOST], axis=axis)
        idx = [slice(None)] * 3
        idx[axis] = slice(0, 2)
        out[tuple(idx)] += 0.5 * lost
        idx[axis] = LOST
        out[tuple(idx)] = 0.0
    return out


@dataclass
class CorrelatorSet:
    """Tripartite correlators for the eight security triples."""

    triples: dict
    pairs: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, val in self.triples.items():
            if not -1.0 - 1e-12 <= val <= 1.0 + 1e-12:
                raise ValueError(f"correlator {key} = {val} outside [-1, 1]")

    @classmethod
    def from_model(cls, noise: NoiseParams, loss_policy=LossPolicy.RANDOM_ASSIGN) -> "CorrelatorSet":
        triples = {t: outcome_distribution(noise, t, loss_policy).correlator() for t in SECURITY_TRIPLES}
        return cls(triples)


def svetlichny_terms(corr: CorrelatorSet) -> tuple[float, float]:
    """The two Charlie-weighted CHSH halves ``(<S_AB c1>, <S'_AB c2>)``."""
    missing = [t for t in SECURITY_TRIPLES if t not in corr.triples]
    if missing:
        raise ValueError(f"missing correlators for triples {missing}")
    halves = []
    for k in (1, 2):
        halves.append(sum(coef * corr.triples[(i, j, k)] for (i, j), coef in CHSH_TERMS[k].items()))
    return halves[0], halves[1]


def svetlichny_value(corr: CorrelatorSet) -> float:
    t1, t2 = svetlichny_terms(corr)
    return t1 + t2


def chsh_value(noise: NoiseParams) -> float:
    return 2.0 * SQRT2 * noise.F * noise.eta_l**3


def chsh_polynomial(k: int, pair: dict) -> float:
    """CHSH combination attached to Charlie's setting ``k`` on pair correlators ``{(i, j): E}``."""
    return sum(coef * pair[ij] for ij, coef in CHSH_TERMS[k].items())


@dataclass(frozen=True)
class ConditionalChsh:
    value: float
    branches: dict  # (k, c) -> signed CHSH value


def chsh_from_conditionals(conditionals: dict, weights: dict | None = None) -> ConditionalChsh:
    """Sign-table CHSH estimate from Charlie-conditioned pair correlators.

    ``conditionals[(k, c)]`` maps ``(i, j)`` to E[a_i b_j | c_k = c] for
    ``c`` in {+1, -1}. Each branch contributes ``c * CHSH_k``. With ``weights``
    (``P(c_k = c)``, which need not sum to one when Charlie can lose his photon)
    the branches are combined as ``sum_k sum_c w * S / 2``; without weights the
    plain mean of the four branches is returned.
    """
    branches = {}
    for k in (1, 2):
        for c in (1, -1):
            if (k, c) not in conditionals:
                raise ValueError(f"no samples with Charlie's record c{k} = {c:+d}")
            branches[(k, c)] = c * chsh_polynomial(k, conditionals[(k, c)])
    if weights is None:
        value = float(np.mean(list(branches.values())))
    else:
        value = 0.5 * sum(weights[key] * s for key, s in branches.items())
    return ConditionalChsh(float(value), branches)


def model_conditionals(noise: NoiseParams, loss_policy=LossPolicy.RANDOM_ASSIGN):
    """Charlie-conditioned pair correlators and branch weights from the model tables."""
    conditionals, weights = {}, {}
    for k in (1, 2):
        tabs = {ij: outcome_distribution(noise, (*ij, k), loss_policy) for ij in CHSH_TERMS[k]}
        for c, cidx in ((1, 0), (-1, 1)):
            conditionals[(k, c)] = {ij: d.conditional_pair_correlator(cidx) for ij, d in tabs.items()}
            weights[(k, c)] = float(np.mean([d.charlie_marginal()[cidx] for d in tabs.values()]))
    return conditionals, weights


def qber_decoherence(noise: NoiseParams) -> float:
    return 0.5 * (1.0 - noise.F) * noise.eta_l**3


def qber_loss(eta_l: float, strategy: Strategy = Strategy.NONE) -> float:
    q2 = 1.0 - eta_l**3
    return q2 if strategy is Strategy.NONE else 0.5 * q2


def total_qber(noise: NoiseParams, strategy: Strategy = Strategy.NONE, q: float = 0.0) -> float:
    """Decoherence plus loss error; Advanced mixes in Alice's flip probability ``q``."""
    delta = qber_decoherence(noise) + qber_loss(noise.eta_l, strategy)
    if strategy is not Strategy.ADVANCED:
        return delta
    if not 0.0 <= q <= 0.5:
        raise ValueError(f"flip probability q must lie in [0, 0.5], got {q}")
    return q + (1.0 - 2.0 * q) * delta


def key_error_probability(dist: OutcomeDistribution, flip_q: float = 0.0) -> float:
    """P(k_A != k_B xor k_C) on one key triple, counting any loss as an error.

    ``flip_q`` is Alice's preprocessing flip probability.
    """
    err = 0.0
    for idx in product(range(3), repeat=3):
        p = dist.table[idx]
        if LOST in idx:
            err += p
        elif VALUES[idx[0]] * VALUES[idx[1]] * VALUES[idx[2]] < 0:
            err += (1.0 - flip_q) * p
        else:
            err += flip_q * p
    return float(err)


def delivered_key_error(dist: OutcomeDistribution) -> float:
    """Joint probability that all three photons arrive and the key relation fails."""
    return float(sum(dist.table[a, b, c] for a, b, c in product((0, 1), repeat=3) if VALUES[a] * VALUES[b] * VALUES[c] < 0))



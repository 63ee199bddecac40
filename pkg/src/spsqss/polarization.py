"""Small-dimension polarization algebra.

Basis convention: ``H`` is computational 0, ``V`` is 1, and photon 0 is the most
significant position of the amplitude index (``|HV>`` is index 1 for two
photons). Spaces never exceed six photons, so everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import product

import numpy as np

SQRT2 = np.sqrt(2.0)
NORM_TOL = 1e-12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

# outcome index 0 is +1, index 1 is -1; index 2 (loss) only appears in noise tables
OUTCOME_VALUES = (1, -1)


@dataclass(frozen=True, eq=False)
class PureState:
    """Amplitude vector over ``{H,V}^n``.

    ``weight`` is the branch probability carried alongside a normalized vector
    when the state came out of a postselection (loss and routing amplitudes
    are kept there, not in the vector). The zero-photon state is the vacuum.
    """

    n_photons: int
    amplitudes: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2**self.n_photons:
            raise ValueError(
                f"{self.n_photons} photons need {2**self.n_photons} amplitudes, got {amps.size}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm - 1.0) <= tol

    def normalized(self) -> "PureState":
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return PureState(self.n_photons, self.amplitudes / np.sqrt(n), self.weight * n)

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(
            self.n_photons + other.n_photons,
            np.kron(self.amplitudes, other.amplitudes),
            self.weight * other.weight,
        )

    def overlap(self, other: "PureState") -> complex:
        if other.n_photons != self.n_photons:
            raise ValueError("photon counts differ")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "PureState") -> float:
        return abs(self.overlap(other)) ** 2

    def apply(self, op: np.ndarray, photon: int) -> "PureState":
        """Apply a single-photon operator to one photon."""
        if not 0 <= photon < self.n_photons:
            raise IndexError(photon)
        t = self.amplitudes.reshape((2,) * self.n_photons)
        t = np.moveaxis(np.tensordot(op, t, axes=([1], [photon])), 0, photon)
        return PureState(self.n_photons, t.reshape(-1), self.weight)


VACUUM = PureState(0, np.array([1.0]))


def basis_state(pols: str) -> PureState:
    """``basis_state("HVV")`` -> ``|HVV>``."""
    idx = 0
    for ch in pols:
        if ch not in "HV":
            raise ValueError(f"unknown polarization {ch!r}")
        idx = 2 * idx + (ch == "V")
    amps = np.zeros(2 ** len(pols), dtype=complex)
    amps[idx] = 1.0
    return PureState(len(pols), amps)


H = basis_state("H")
V = basis_state("V")


@dataclass(frozen=True, order=True)
class GhzLabel:
    index: int
    sign: int  # +1 or -1

    def __post_init__(self):
        if self.index not in (1, 2, 3, 4):
            raise ValueError(f"GHZ index must be 1..4, got {self.index}")
        if self.sign not in (1, -1):
            raise ValueError(f"GHZ sign must be +1 or -1, got {self.sign}")

    def __str__(self):
        return f"GHZ{self.index}{'+' if self.sign > 0 else '-'}"


ALL_GHZ_LABELS = tuple(GhzLabel(i, s) for i in (1, 2, 3, 4) for s in (1, -1))

# first ket of each pair; the partner is its bitwise complement
_GHZ_LEADING = {1: "HHH", 2: "HHV", 3: "HVH", 4: "HVV"}


def ghz_state(label: GhzLabel) -> PureState:
    lead = basis_state(_GHZ_LEADING[label.index]).amplitudes
    comp = lead[::-1]  # index complement == reversal for 3 bits
    return PureState(3, (lead + label.sign * comp) / SQRT2)


class Party(str, Enum):
    ALICE = "Alice"
    BOB = "Bob"
    CHARLIE = "Charlie"


@dataclass(frozen=True)
class MeasurementSetting:
    party: Party
    label: str
    bloch: tuple

    @property
    def index(self) -> int:
        return int(self.label[1])

    @property
    def phase(self) -> float:
        """Azimuth of the equatorial bloch vector."""
        return float(np.arctan2(self.bloch[1], self.bloch[0]))


_R = 1.0 / SQRT2
SETTINGS = {
    "A1": MeasurementSetting(Party.ALICE, "A1", (1.0, 0.0, 0.0)),
    "A2": MeasurementSetting(Party.ALICE, "A2", (0.0, 1.0, 0.0)),
    "B1": MeasurementSetting(Party.BOB, "B1", (1.0, 0.0, 0.0)),
    "B2": MeasurementSetting(Party.BOB, "B2", (_R, -_R, 0.0)),
    "B3": MeasurementSetting(Party.BOB, "B3", (_R, _R, 0.0)),
    "C1": MeasurementSetting(Party.CHARLIE, "C1", (1.0, 0.0, 0.0)),
    "C2": MeasurementSetting(Party.CHARLIE, "C2", (0.0, -1.0, 0.0)),
}


def setting(party: str, index: int) -> MeasurementSetting:
    return SETTINGS[f"{party[0].upper()}{index}"]


def observable(s: MeasurementSetting) -> np.ndarray:
    """Return ``bloch . (sx, sy, sz)``."""
    bx, by, bz = s.bloch
    return bx * PAULI_X + by * PAULI_Y + bz * PAULI_Z


@lru_cache(maxsize=None)
def _eigenbasis(label: str) -> np.ndarray:
    # rows are <+| and <-| of the observable
    w, vecs = np.linalg.eigh(observable(SETTINGS[label]))
    order = np.argsort(-w)
    return vecs[:, order].conj().T


def born_distribution(state: PureState, settings) -> np.ndarray:
    """Joint outcome probabilities for one setting per party.

    Returns a (2, 2, 2) array ``P[a, b, c]`` with index 0 for +1 and 1 for -1.
    """
    if state.n_photons != 3:
        raise ValueError("born_distribution expects a three-photon state")
    settings = tuple(settings)
    parties = [s.party for s in settings]
    if len(settings) != 3 or len(set(parties)) != 3:
        raise ValueError(f"need one setting per party, got {[s.label for s in settings]}")
    if not state.is_normalized():
        raise ValueError(f"state not normalized (norm {state.norm:.3e})")
    order = {Party.ALICE: 0, Party.BOB: 1, Party.CHARLIE: 2}
    settings = sorted(settings, key=lambda s: order[s.party])
    t = state.amplitudes.reshape(2, 2, 2)
    ua, ub, uc = (_eigenbasis(s.label) for s in settings)
    amp = np.einsum("ai,bj,ck,ijk->abc", ua, ub, uc, t)
    return np.abs(amp) ** 2


def product_plus_probability(dist: np.ndarray) -> float:
    """P(a*b*c = +1) from a (2,2,2) Born table."""
    total = 0.0
    for a, b, c in product(range(2), repeat=3):
        if OUTCOME_VALUES[a] * OUTCOME_VALUES[b] * OUTCOME_VALUES[c] == 1:
            total += dist[a, b, c]
    return float(total)


def expectation(state: PureState, settings) -> float:
    """``<psi| O_A (x) O_B (x) O_C |psi>`` by direct matrix product."""
    ops = [observable(s) for s in settings]
    big = np.kron(np.kron(ops[0], ops[1]), ops[2])
    return float(np.vdot(state.amplitudes, big @ state.amplitudes).real)


def ghz_correlator(i: int, j: int, k: int) -> float:
    """<a_i b_j c_k> on |GHZ_1^+> for equatorial settings: cos of the summed azimuths."""
    phase = setting("A", i).phase + setting("B", j).phase + setting("C", k).phase
    return float(np.cos(phase))

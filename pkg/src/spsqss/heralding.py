"""Heralded GHZ channel: VBS branching, GSM, and the storage-loop memory.

Six-photon states use the order ``(arm_A, arm_B, arm_C, mem_A, mem_B, mem_C)``:
the three photons travelling to the GSM first, then the three held in the
users' memories.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import product

import numpy as np
from scipy.optimize import minimize_scalar

from spsqss.polarization import (
    ALL_GHZ_LABELS,
    PAULI_Z,
    GhzLabel,
    PureState,
    ghz_state,
)

GHZ_PLUS = GhzLabel(1, 1)
GHZ_MINUS = GhzLabel(1, -1)


def _check_prob(name, x):
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


# --------------------------------------------------------------------------
# variable beam splitter


@dataclass(frozen=True)
class VbsBranch:
    """Routing of one user's H and V photons; ``True`` means transmitted."""

    h_transmitted: bool
    v_transmitted: bool
    amplitude: float

    @property
    def probability(self) -> float:
        return self.amplitude**2

    @property
    def postselected(self) -> bool:
        return self.h_transmitted != self.v_transmitted


def vbs_branch_amplitudes(T: float) -> list[VbsBranch]:
    """Four routing branches of ``|H>|V>`` through a VBS of transmittance ``T``."""
    _check_prob("T", T)
    t, r = np.sqrt(T), np.sqrt(1.0 - T)
    out = []
    for h_tx, v_tx in product((True, False), repeat=2):
        out.append(VbsBranch(h_tx, v_tx, (t if h_tx else r) * (t if v_tx else r)))
    return out


def postselected_probability(T: float) -> float:
    return float(sum(b.probability for b in vbs_branch_amplitudes(T) if b.postselected))


def _user_pair_amplitudes(T: float, eta_t: float) -> np.ndarray:
    # (arm, mem) two-photon amplitudes; transmitted photon must also survive the fibre
    amps = np.zeros(4)
    for b in vbs_branch_amplitudes(T):
        if not b.postselected:
            continue
        arm_pol = 0 if b.h_transmitted else 1
        mem_pol = 1 - arm_pol
        amps[2 * arm_pol + mem_pol] += b.amplitude * np.sqrt(eta_t)
    return amps


def collapsed_joint_state(T: float, eta_t: float) -> PureState:
    """Surviving six-photon branch after one-transmitted/one-reflected postselection.

    The returned state is normalized; ``weight`` holds its total probability
    ``8 (eta_t T (1-T))^3``. A zero-weight branch comes back with the ideal
    vector so callers can still inspect its shape.
    """
    _check_prob("T", T)
    _check_prob("eta_t", eta_t)
    pair = _user_pair_amplitudes(T, eta_t)
    joint = np.kron(np.kron(pair, pair), pair).reshape((2,) * 6)
    # user-major (aA mA aB mB aC mC) -> (aA aB aC mA mB mC)
    joint = joint.transpose(0, 2, 4, 1, 3, 5).reshape(-1)
    weight = float(np.vdot(joint, joint).real)
    if weight == 0.0:
        ideal = _user_pair_amplitudes(0.5, 1.0)
        ideal = np.kron(np.kron(ideal, ideal), ideal).reshape((2,) * 6)
        joint = ideal.transpose(0, 2, 4, 1, 3, 5).reshape(-1)
        return PureState(6, joint / np.linalg.norm(joint), 0.0)
    return PureState(6, joint / np.sqrt(weight), weight)


# --------------------------------------------------------------------------
# GHZ-state measurement


class Verdict(str, Enum):
    PLUS = "HeraldPlus"
    MINUS = "HeraldMinus"
    FAIL = "Fail"


@dataclass(frozen=True)
class GsmResult:
    verdict: Verdict
    heralded_state: PureState | None = None

    def corrected_state(self) -> PureState | None:
        """Memory state after Alice's conditional phase flip."""
        if self.heralded_state is None:
            return None
        if self.verdict is Verdict.MINUS:
            return self.heralded_state.apply(PAULI_Z, 0)
        return self.heralded_state


def _project_arms(joint: PureState, label: GhzLabel) -> np.ndarray:
    bra = ghz_state(label).amplitudes.conj()
    rest = joint.n_photons - 3
    return bra @ joint.amplitudes.reshape(8, 2**rest)


def gsm_project(joint: PureState) -> list[tuple[GsmResult, float]]:
    """Project the arm photons onto the GHZ basis.

    Only the two ``GHZ_1`` outcomes are identified; the other six projections
    are merged into a single ``Fail`` entry with no state attached.
    """
    if joint.n_photons != 6:
        raise ValueError(f"gsm_project expects a six-photon state, got {joint.n_photons}")
    results = []
    fail = 0.0
    for label in ALL_GHZ_LABELS:
        mem = _project_arms(joint, label)
        p = float(np.vdot(mem, mem).real)
        if label == GHZ_PLUS or label == GHZ_MINUS:
            verdict = Verdict.PLUS if label == GHZ_PLUS else Verdict.MINUS
            state = PureState(3, mem / np.sqrt(p)) if p > 0 else None
            results.append((GsmResult(verdict, state), p))
        else:
            fail += p
    results.append((GsmResult(Verdict.FAIL), fail))
    return results


# Linear-optics analyzer: PBS1 mixes arms 1 and 2, PBS2 mixes PBS1's second port
# with arm 3, then each output is rotated by 45 degrees and split onto D_kH/D_kV.
# PBS transmits H and reflects V.
def _route(arm: int, pol: int) -> int:
    """Output port (0, 1, 2) reached by a photon entering ``arm`` with ``pol``."""
    if arm in (0, 1):
        # PBS1: H keeps its side, V swaps
        side = arm if pol == 0 else 1 - arm
        if side == 0:
            return 0
        # port 1 of PBS1 meets arm 3 at PBS2
        return 1 if pol == 0 else 2
    return 2 if pol == 0 else 1


_ROT45 = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)  # rows: detector H, V

PATTERNS = tuple(product((0, 1), repeat=3))

# click lists as printed in the source description of the analyzer
PUBLISHED_PLUS_PATTERNS = ("HHH", "HVV", "VHV", "VVH")
PUBLISHED_MINUS_PATTERNS = ("HVV", "HHV", "VHH", "HVH")


def pattern_name(pattern) -> str:
    return " ".join(f"D{k + 1}{'HV'[p]}" for k, p in enumerate(pattern))


def pattern_key(pattern) -> str:
    return "".join("HV"[p] for p in pattern)


def _analyzer_matrix() -> np.ndarray:
    """Amplitudes from arm basis states to three-fold coincidence patterns.

    Column ``x`` is an arm basis state, row ``m`` a pattern with one click per
    output. Inputs that put two photons into the same output port never give
    a three-fold coincidence and leave their column zero.
    """
    m = np.zeros((8, 8))
    for x, pols in enumerate(PATTERNS):
        ports = [_route(arm, pol) for arm, pol in enumerate(pols)]
        if sorted(ports) != [0, 1, 2]:
            continue
        out_pol = [0, 0, 0]
        for arm, pol in enumerate(pols):
            out_pol[ports[arm]] = pol
        for row, det in enumerate(PATTERNS):
            m[row, x] = np.prod([_ROT45[det[k], out_pol[k]] for k in range(3)])
    return m


ANALYZER = _analyzer_matrix()


@dataclass(frozen=True)
class ClickEntry:
    pattern: tuple | None  # None marks every non-coincidence event
    probability: float
    herald: Verdict


def _derive_classes() -> dict:
    # a pattern heralds whichever GHZ_1 state reaches it; no pattern is reached by both
    plus = np.abs(ANALYZER @ ghz_state(GHZ_PLUS).amplitudes) ** 2
    minus = np.abs(ANALYZER @ ghz_state(GHZ_MINUS).amplitudes) ** 2
    classes = {}
    for i, pat in enumerate(PATTERNS):
        if plus[i] > 1e-12 and minus[i] <= 1e-12:
            classes[pat] = Verdict.PLUS
        elif minus[i] > 1e-12 and plus[i] <= 1e-12:
            classes[pat] = Verdict.MINUS
        else:
            classes[pat] = Verdict.FAIL
    return classes


PATTERN_CLASS = _derive_classes()


def _pattern_class(pattern) -> Verdict:
    return PATTERN_CLASS[tuple(pattern)]


def gsm_click_distribution(state: PureState, arms=(0, 1, 2)) -> list[ClickEntry]:
    """Simulate the linear-optics analyzer on the first three photons of ``state``.

    Extra photons (for instance the memory half of the six-photon state) are
    spectators and are traced out. ``arms`` names the input arm of each of the
    first three photons and must use every arm once.
    """
    arms = tuple(arms)
    if sorted(arms) != [0, 1, 2]:
        raise ValueError(f"GSM needs exactly one photon per input arm, got arms {arms}")
    if state.n_photons < 3:
        raise ValueError("GSM needs three input photons")
    t = state.amplitudes.reshape((2,) * state.n_photons)
    t = np.moveaxis(t, [0, 1, 2], list(arms)).reshape(8, -1)
    out = ANALYZER @ t
    probs = np.einsum("ij,ij->i", out.conj(), out).real
    total = state.norm
    entries = [ClickEntry(pat, float(probs[i]), _pattern_class(pat)) for i, pat in enumerate(PATTERNS)]
    entries.append(ClickEntry(None, float(total - probs.sum()), Verdict.FAIL))
    return entries


def click_class_totals(entries) -> dict:
    totals = {v: 0.0 for v in Verdict}
    for e in entries:
        totals[e.herald] += e.probability
    return totals


def published_list_disagreements() -> list[tuple[str, str, str]]:
    """Printed click lists compared with the simulated partition.

    Returns ``(pattern, printed class, simulated class)`` for every mismatch,
    including duplicates listed under both classes.
    """
    out = []
    for listed, cls in ((PUBLISHED_PLUS_PATTERNS, Verdict.PLUS), (PUBLISHED_MINUS_PATTERNS, Verdict.MINUS)):
        for key in listed:
            sim = _pattern_class(tuple("HV".index(ch) for ch in key))
            if sim is not cls:
                out.append((key, cls.value, sim.value))
    printed = set(PUBLISHED_PLUS_PATTERNS) | set(PUBLISHED_MINUS_PATTERNS)
    for pat in PATTERNS:
        key = pattern_key(pat)
        if key not in printed:
            out.append((key, "unlisted", _pattern_class(pat).value))
    return out


def heralding_probability(T: float, eta_t: float) -> float:
    _check_prob("T", T)
    _check_prob("eta_t", eta_t)
    return 2.0 * eta_t**3 * T**3 * (1.0 - T) ** 3


def composed_heralding_probability(T: float, eta_t: float) -> float:
    """Same quantity assembled from the VBS branches, the collapsed state and the GSM."""
    joint = collapsed_joint_state(T, eta_t)
    herald = sum(p for r, p in gsm_project(joint) if r.verdict is not Verdict.FAIL)
    return joint.weight * herald


def optimal_vbs(eta_t: float) -> float:
    """Transmittance maximizing the heralding probability."""
    if not 0.0 < eta_t <= 1.0:
        raise ValueError(f"eta_t must lie in (0, 1], got {eta_t}")
    res = minimize_scalar(
        lambda t: -heralding_probability(t, eta_t) / eta_t**3,
        bounds=(0.0, 1.0),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x)


# --------------------------------------------------------------------------
# storage-loop quantum memory
#
# Four-port PBS: H links Q1-Q2 and Q3-Q4, V links Q1-Q3 and Q2-Q4. The EOM sits
# on the Q2-Q3 path, the double-pass QWP mirror on Q4.

_PBS_PORT = {
    ("Q1", "H"): "Q2",
    ("Q2", "H"): "Q1",
    ("Q3", "H"): "Q4",
    ("Q4", "H"): "Q3",
    ("Q1", "V"): "Q3",
    ("Q3", "V"): "Q1",
    ("Q2", "V"): "Q4",
    ("Q4", "V"): "Q2",
}
_FLIP = {"H": "V", "V": "H"}


@dataclass(frozen=True)
class EomSchedule:
    """EOM state (``True`` = ON) for each pass through the modulator."""

    passes: tuple

    @classmethod
    def canonical(cls, storage_cycles: int) -> "EomSchedule":
        if storage_cycles < 0:
            raise ValueError("storage_cycles must be >= 0")
        return cls((False,) + (True,) * storage_cycles + (False,))

    @property
    def round_trips(self) -> int:
        """Mirror reflections before readout."""
        return len(self.passes) - 1


@dataclass(frozen=True)
class QmStep:
    element: str
    mode: str
    pol: str

    def __str__(self):
        return f"{self.pol}_{self.mode}"


@dataclass(frozen=True)
class QmTrace:
    input_pol: str
    output_pol: str
    steps: tuple

    def render(self) -> str:
        parts = [str(self.steps[0])]
        for st in self.steps[1:]:
            parts.append(f"-{st.element}-> {st}")
        return " ".join(parts)


class ScheduleError(ValueError):
    pass


def qm_trace(pol: str, storage_cycles: int, schedule: EomSchedule | None = None) -> QmTrace:
    """Follow one photon through store and readout, pass by pass.

    ``storage_cycles`` counts EOM passes in the ON state. Any schedule that
    would release the photon early or never release it is rejected.
    """
    if pol not in ("H", "V"):
        raise ValueError(f"polarization must be 'H' or 'V', got {pol!r}")
    if schedule is None:
        schedule = EomSchedule.canonical(storage_cycles)
    passes = tuple(schedule.passes)
    if len(passes) != storage_cycles + 2:
        raise ScheduleError(
            f"schedule has {len(passes)} passes, expected {storage_cycles + 2} "
            f"for {storage_cycles} storage cycles"
        )
    if passes[0]:
        raise ScheduleError("pass 1 (entry) is ON: the photon would be ejected without storage")
    if passes[-1]:
        raise ScheduleError(f"pass {len(passes)} (readout) is ON: the photon is never released")
    for n, on in enumerate(passes[1:-1], start=2):
        if not on:
            raise ScheduleError(f"pass {n} is OFF during storage: the photon would be read out early")

    mode, p = "Q1", pol
    steps = [QmStep("in", mode, p)]
    eom = iter(passes)
    while True:
        mode = _PBS_PORT[(mode, p)]
        steps.append(QmStep("PBS", mode, p))
        if mode == "Q1":
            break
        if mode == "Q4":
            p = _FLIP[p]
            steps.append(QmStep("double QWP", mode, p))
            continue
        on = next(eom)
        mode = "Q3" if mode == "Q2" else "Q2"
        if on:
            p = _FLIP[p]
        steps.append(QmStep(f"EOM({'ON' if on else 'OFF'})", mode, p))
    p = _FLIP[p]
    steps.append(QmStep("HWP", "out", p))
    return QmTrace(pol, p, tuple(steps))


def qm_survival(round_trips: int, per_trip_efficiency: float) -> float:
    _check_prob("per_trip_efficiency", per_trip_efficiency)
    if round_trips < 0:
        raise ValueError("round_trips must be >= 0")
    return per_trip_efficiency**round_trips

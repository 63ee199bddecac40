import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spsqss.polarization import (
    ALL_GHZ_LABELS,
    PAULI_X,
    SETTINGS,
    GhzLabel,
    PureState,
    basis_state,
    born_distribution,
    expectation,
    ghz_correlator,
    ghz_state,
    observable,
    product_plus_probability,
)


def projector_oracle(state, settings, a, b, c):
    # (I + s O)/2 per party, traced against |psi><psi|
    ops = [(np.eye(2) + sgn * observable(s)) / 2 for s, sgn in zip(settings, (a, b, c))]
    proj = np.kron(np.kron(ops[0], ops[1]), ops[2])
    return float(np.vdot(state.amplitudes, proj @ state.amplitudes).real)


TRIPLES = list(itertools.product((1, 2), (1, 2, 3), (1, 2)))


def triple_settings(i, j, k):
    return SETTINGS[f"A{i}"], SETTINGS[f"B{j}"], SETTINGS[f"C{k}"]


def test_ghz_basis_orthonormal():
    vecs = np.array([ghz_state(label).amplitudes for label in ALL_GHZ_LABELS])
    np.testing.assert_allclose(vecs.conj() @ vecs.T, np.eye(8), atol=1e-12)


def test_basis_state_index_convention():
    assert np.argmax(np.abs(basis_state("HV").amplitudes)) == 1
    assert np.argmax(np.abs(basis_state("VHH").amplitudes)) == 4


def test_ghz_label_validation():
    with pytest.raises(ValueError):
        GhzLabel(5, 1)
    with pytest.raises(ValueError):
        GhzLabel(1, 0)


@pytest.mark.parametrize("triple", TRIPLES)
def test_born_matches_projector_oracle(triple):
    psi = ghz_state(GhzLabel(1, 1))
    sets = triple_settings(*triple)
    dist = born_distribution(psi, sets)
    for (ia, a), (ib, b), (ic, c) in itertools.product(enumerate((1, -1)), repeat=3):
        assert dist[ia, ib, ic] == pytest.approx(projector_oracle(psi, sets, a, b, c), abs=1e-12)


@pytest.mark.parametrize("triple", TRIPLES)
def test_ghz_correlator_is_cosine_of_phases(triple):
    psi = ghz_state(GhzLabel(1, 1))
    sets = triple_settings(*triple)
    assert expectation(psi, sets) == pytest.approx(ghz_correlator(*triple), abs=1e-12)
    dist = born_distribution(psi, sets)
    assert 2 * product_plus_probability(dist) - 1 == pytest.approx(ghz_correlator(*triple), abs=1e-12)


@pytest.mark.parametrize("triple", TRIPLES)
def test_born_marginals_uniform(triple):
    dist = born_distribution(ghz_state(GhzLabel(1, 1)), triple_settings(*triple))
    for axis in range(3):
        np.testing.assert_allclose(dist.sum(axis=tuple(a for a in range(3) if a != axis)), [0.5, 0.5], atol=1e-12)


def test_key_triples_correlate_perfectly():
    assert ghz_correlator(1, 1, 1) == pytest.approx(1.0)
    assert ghz_correlator(2, 1, 2) == pytest.approx(1.0)


def test_born_rejects_bad_input():
    psi = ghz_state(GhzLabel(1, 1))
    with pytest.raises(ValueError):
        born_distribution(psi, (SETTINGS["A1"], SETTINGS["A2"], SETTINGS["C1"]))
    with pytest.raises(ValueError):
        born_distribution(PureState(3, 2 * psi.amplitudes), triple_settings(1, 1, 1))


def test_apply_flips_polarization():
    flipped = basis_state("HHV").apply(PAULI_X, 0)
    assert flipped.fidelity(basis_state("VHV")) == pytest.approx(1.0)


complex_amps = st.lists(st.floats(-1, 1, allow_nan=False), min_size=16, max_size=16)


@given(complex_amps, st.sampled_from(TRIPLES))
def test_born_normalized_for_random_states(raw, triple):
    v = np.array(raw[:8]) + 1j * np.array(raw[8:])
    if np.linalg.norm(v) < 1e-3:
        return
    psi = PureState(3, v / np.linalg.norm(v))
    dist = born_distribution(psi, triple_settings(*triple))
    assert dist.sum() == pytest.approx(1.0, abs=1e-12)
    assert (dist >= -1e-15).all()

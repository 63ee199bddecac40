import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spsqss.keyrate import (
    S_MAX,
    ChannelConfig,
    Provider,
    ProviderDomainError,
    SecrecyProvider,
    binary_entropy,
    devetak_winter,
    distance_at_rate,
    g_func,
    g_func_q,
    maximize_transcribed,
    practical_rate,
    sample_feasible_points,
    secrecy_bound,
    sweep,
    threshold_bisect,
)
from spsqss.noise import Strategy

BASE = ChannelConfig()


def h_oracle(x):
    return -sum(p * math.log2(p) for p in (x, 1 - x) if p > 0)


@given(st.floats(0.0, 1.0))
def test_binary_entropy_matches_definition(x):
    assert binary_entropy(x) == pytest.approx(h_oracle(x), abs=1e-12)
    assert binary_entropy(x) == pytest.approx(binary_entropy(1 - x), abs=1e-12)


def test_binary_entropy_edges():
    assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(1.0)
    np.testing.assert_allclose(binary_entropy(np.array([0.0, 0.5])), [0.0, 1.0])
    with pytest.raises(ValueError):
        binary_entropy(1.5)


@given(st.floats(2.0, S_MAX))
def test_g_func_q_reduces_without_noise(S):
    expected = 1 - h_oracle(0.5 + math.sqrt(S * S / 4 - 1) / 2)
    assert g_func_q(S, 0.0) == pytest.approx(expected, abs=1e-12)
    assert g_func(math.sqrt(S * S / 4 - 1)) == pytest.approx(expected, abs=1e-12)


@given(st.floats(0.0, 0.5))
def test_g_func_q_is_one_at_tsirelson(q):
    assert g_func_q(S_MAX, q) == pytest.approx(1.0, abs=1e-12)


def test_g_func_q_zero_below_two():
    with pytest.warns(UserWarning):
        assert g_func_q(1.5, 0.1) == 0.0
    assert g_func_q(2.0, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_g_func_q_monotone_in_S():
    S = np.linspace(2.0, S_MAX, 400)
    for q in (0.0, 0.2, 0.45):
        vals = [g_func_q(s, q) for s in S]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_ideal_provider_domain():
    ideal = SecrecyProvider(Provider.IDEAL)
    assert secrecy_bound(S_MAX, provider=ideal) == 1.0
    assert secrecy_bound(1.9, provider=ideal) == 0.0
    with pytest.raises(ProviderDomainError):
        secrecy_bound(2.5, provider=ideal)


def test_ideal_rate_chain():
    b = devetak_winter(BASE)
    assert b.E_c == 78125.0
    assert b.P_d == 1 / 32
    assert b.R_inf == 0.5
    for prov in Provider:
        assert practical_rate(replace(BASE, provider=SecrecyProvider(prov))) == 78125.0


def test_reference_distances():
    assert distance_at_rate(BASE, 1.0).value == pytest.approx(81.55, abs=0.2)
    assert distance_at_rate(BASE, 1e-4).value == pytest.approx(148.21, abs=0.3)


@given(
    st.floats(0.9, 1.0),
    st.floats(0.95, 1.0),
    st.floats(0.1, 0.5),
    st.floats(1e-6, 1e2),
)
def test_distance_matches_log_oracle(F, eta_l, alpha, target):
    cfg = replace(BASE, F=F, alpha=alpha).with_local_efficiency(eta_l)
    e0 = practical_rate(cfg)
    res = distance_at_rate(cfg, target)
    if e0 <= target:
        assert not res.found
        return
    expected = 10 / (3 * alpha) * math.log10(e0 / target)
    assert res.value == pytest.approx(expected, rel=1e-8)
    assert practical_rate(replace(cfg, d=res.value)) == pytest.approx(target, rel=1e-8)


def test_single_basis_halves_rate():
    single = replace(BASE, key_bases=1)
    assert practical_rate(BASE) / practical_rate(single) == 2.0
    gap = distance_at_rate(BASE, 1.0).value - distance_at_rate(single, 1.0).value
    assert gap == pytest.approx(10 / (3 * 0.2) * math.log10(2), abs=1e-6)
    assert distance_at_rate(single, 1.0).value == pytest.approx(76.53, abs=0.1)


def test_threshold_ordering_pironio():
    none = threshold_bisect(BASE).value
    post = threshold_bisect(replace(BASE, strategy=Strategy.POSTSELECT)).value
    adv = threshold_bisect(replace(BASE, strategy=Strategy.ADVANCED, q=0.499)).value
    assert none > post > adv


def test_threshold_is_a_root():
    res = threshold_bisect(BASE)
    assert abs(res.residual) < 1e-10
    assert devetak_winter(BASE.with_local_efficiency(res.value + 1e-6)).R_inf > 0
    assert devetak_winter(BASE.with_local_efficiency(res.value - 1e-6)).R_inf < 0


def test_fidelity_threshold():
    res = threshold_bisect(BASE, "F")
    assert res.found and 0.8 < res.value < 0.9


def test_no_threshold_cases():
    assert not threshold_bisect(BASE, interval=(0.99, 1.0)).found
    ideal = threshold_bisect(replace(BASE, provider=SecrecyProvider(Provider.IDEAL)))
    assert not ideal.found and "ideal provider" in ideal.reason
    with pytest.raises(ValueError):
        threshold_bisect(BASE, "T")


def test_distance_no_solution():
    res = distance_at_rate(BASE, 1e6)
    assert not res.found and "not above target" in res.reason


@pytest.mark.parametrize("S", [2.05, 2.4, 2.7, 2.82])
@pytest.mark.parametrize("lam", [0.5, 0.8, 1.0])
def test_optimizer_dominates_random_feasible_points(S, lam):
    pts = sample_feasible_points(S, 10_000, np.random.default_rng(11))
    assert len(pts) == 10_000
    s, c, g, h, d = pts.T
    assert (c * g + s * h >= S / 2 - 1e-12).all()
    sampled = s * s * g * g + c * c * h * h + 2 * (2 * lam - 1) * s * c * g * h * d
    res = maximize_transcribed(S, lam)
    assert res.point.feasible(S)
    assert res.value >= sampled.max() - 1e-9


def test_transcribed_program_is_degenerate():
    res = maximize_transcribed(2.3, 0.5)
    assert res.degenerate and res.value == pytest.approx(1.0)
    assert secrecy_bound(2.3, provider=SecrecyProvider(Provider.TRANSCRIBED)) == pytest.approx(1.0)


def test_monotonicity_on_grids():
    etas = np.linspace(0.85, 1.0, 200)
    rows = [devetak_winter(BASE.with_local_efficiency(e)) for e in etas]
    S = [r.S for r in rows]
    delta = [r.delta for r in rows]
    R = [r.R_inf for r in rows]
    assert all(b > a for a, b in zip(S, S[1:]))
    assert all(b < a for a, b in zip(delta, delta[1:]))
    assert all(b >= a for a, b in zip(R, R[1:]))
    Fs = np.linspace(0.7, 1.0, 200)
    R_F = [devetak_winter(replace(BASE, F=F)).R_inf for F in Fs]
    assert all(b >= a for a, b in zip(R_F, R_F[1:]))
    E = [practical_rate(replace(BASE, d=d)) for d in np.linspace(0, 200, 200)]
    assert all(b < a for a, b in zip(E, E[1:]))


def test_advanced_rate_decreases_with_q_at_high_efficiency():
    cfg = replace(BASE, strategy=Strategy.ADVANCED).with_local_efficiency(0.99)
    rates = [devetak_winter(replace(cfg, q=q)).R_inf for q in (0.0, 0.05, 0.2, 0.4)]
    assert all(b < a for a, b in zip(rates, rates[1:]))


def test_sweep_points_equal_direct_calls():
    rows = sweep(BASE, "d", 0.0, 10.0, 2)
    assert [r.breakdown.E_c for r in rows] == [practical_rate(BASE), practical_rate(replace(BASE, d=10.0))]
    single = sweep(BASE, "F", 0.9, 0.9, 1)
    assert single[0].breakdown.E_c == practical_rate(replace(BASE, F=0.9))


@pytest.mark.parametrize("args", [("d", 5.0, 1.0, 3), ("d", 1.0, 1.0, 3), ("x", 0.0, 1.0, 2), ("d", 0.0, 1.0, 0)])
def test_sweep_rejects_bad_ranges(args):
    with pytest.raises(ValueError):
        sweep(BASE, *args)


def test_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(q=0.7)
    with pytest.raises(ValueError):
        ChannelConfig(key_bases=3)
    assert ChannelConfig(p=0.5).lam == 0.5
    assert ChannelConfig(eta_c=0.9, eta_m=0.9, eta_d=0.9).eta_l == pytest.approx(0.729)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twomodecat.config import DEFAULT_CONFIG_TEXT, parse_config
from twomodecat.errors import InvalidArgumentError, ValidationError
from twomodecat.fock import DensityMatrix, cat_state, collective_modes, field_spec, fock_state
from twomodecat.protocol import (
    SchemeL1Params,
    SchemeL2Params,
    TauDistribution,
    alpha_from_drive,
    atom_event,
    atom_event_reference,
    build_hamiltonian_L1,
    build_hamiltonian_L2,
    cancellation_check,
    effective_rates,
    make_schedule,
    require_valid,
    resonant_tau,
    run_protocol,
    scheme_L1,
    scheme_L2,
)

L1 = SchemeL1Params(0.1, 0.1)
L2 = SchemeL2Params(gb_tau2=100, gb_over_delta=1e-3, ga_over_gb=1, omega_tau2=0.1)
L2_SMALL = SchemeL2Params(gb_tau2=10, gb_over_delta=1e-2, ga_over_gb=1, omega_tau2=0.1)


def random_dm(spec, seed, n_max=None):
    rng = np.random.default_rng(seed)
    d = spec.dim
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    if n_max is not None:
        nb = spec.cutoff_b + 1
        keep = np.array([(i // nb) <= n_max and (i % nb) <= n_max for i in range(d)])
        x[~keep] = 0
    rho = x @ x.conj().T
    return DensityMatrix(spec, rho / np.trace(rho))


# ---------------------------------------------------------------- parameters


def test_alpha_from_drive():
    assert alpha_from_drive(L2) == pytest.approx(1.0)
    assert alpha_from_drive(L2_SMALL) == pytest.approx(1.0)
    p = SchemeL2Params.for_alpha(0.5, gb_tau2=100, gb_over_delta=1e-3, ga_over_gb=1)
    assert p.omega_tau2 == pytest.approx(0.025)
    # negative detuning gives a purely imaginary principal root
    neg = SchemeL2Params(gb_tau2=100, gb_over_delta=-1e-3, ga_over_gb=1, omega_tau2=0.1)
    assert alpha_from_drive(neg) == pytest.approx(1j)


def test_regime_checks():
    assert L1.violations(n_minus=1.0) == []
    assert L2.violations() == []
    assert SchemeL1Params(0.5, 0.5).violations(n_minus=1.0)
    bad = SchemeL2Params(gb_tau2=100, gb_over_delta=0.5, ga_over_gb=1, omega_tau2=0.1)
    with pytest.raises(ValidationError):
        require_valid(bad)
    assert any("Omega" in v for v in SchemeL2Params(100, 1e-3, 1, 0.9).violations())


def test_active_fraction():
    p = SchemeL2Params(100, 1e-3, 1, 0.1, variant="h_aux", phi=math.pi / 3)
    assert p.active_fraction == pytest.approx(0.25)
    assert L2.active_fraction == 1.0


# ---------------------------------------------------------------- Hamiltonians


@pytest.mark.parametrize("variant", ["bare", "h_prime", "h_aux"])
def test_hamiltonians_conserve_charge(variant):
    spec = field_spec(3)
    p = SchemeL2Params(10, 1e-2, 1, 0.1, variant=variant)
    s = scheme_L2(p, spec)
    H = s.hamiltonian.matrix
    assert np.allclose(H, H.conj().T)
    Q = np.diag(s.charge)
    assert np.allclose(H @ Q, Q @ H)
    s1 = scheme_L1(L1, spec)
    Q1 = np.diag(s1.charge)
    assert np.allclose(s1.hamiltonian.matrix @ Q1, Q1 @ s1.hamiltonian.matrix)


def test_hamiltonian_level_mismatch():
    spec = field_spec(2).with_atom(("1", "2"))
    with pytest.raises(InvalidArgumentError):
        build_hamiltonian_L1(L1, spec)
    with pytest.raises(InvalidArgumentError):
        build_hamiltonian_L2(L2, spec)


def test_l1_coupling_elements():
    spec = field_spec(2).with_atom(("1", "2", "3"))
    H = build_hamiltonian_L1(SchemeL1Params(0.3, 0.2), spec).matrix
    m = 3

    def idx(na, nb, lv):
        return (na * 3 + nb) * m + lv

    # |0,0,3> couples to |1,0,1> with g_a and to |0,1,2> with g_b
    assert H[idx(1, 0, 0), idx(0, 0, 2)] == pytest.approx(0.3)
    assert H[idx(0, 1, 1), idx(0, 0, 2)] == pytest.approx(0.2)


# ---------------------------------------------------------------- cancellation


def test_cancellation_default_variants():
    assert cancellation_check(L2).passed
    assert cancellation_check(SchemeL2Params(100, 1e-3, 1, 0.1, variant="h_aux")).passed
    with pytest.raises(InvalidArgumentError):
        cancellation_check(SchemeL2Params(100, 1e-3, 1, 0.1, variant="bare"))


def test_cancellation_fails_with_same_sign_detuning():
    p = SchemeL2Params(100, 1e-3, 1, 0.1, variant="h_aux", delta_aux_over_delta=1.0)
    rep = cancellation_check(p)
    assert not rep.passed
    # cos^2 + sin^2 of g_a'^2 / |Delta| = 1e4 / 1e5
    assert rep.residual == pytest.approx(0.1)


# ---------------------------------------------------------------- Kraus maps


@pytest.mark.parametrize("which", ["L1", "bare", "h_prime", "h_aux"])
def test_kraus_complete_and_routes_agree(which):
    spec = field_spec(4)
    if which == "L1":
        s = scheme_L1(L1, spec)
    else:
        s = scheme_L2(SchemeL2Params(10, 1e-2, 1, 0.1, variant=which), spec)
    K = s.kraus()
    assert np.allclose(np.einsum("jab,jac->bc", K.conj(), K), np.eye(spec.dim), atol=1e-10)
    rho = random_dm(spec, 5)
    prop = s.propagator()
    a = s.channel().apply(rho.matrix)
    b = atom_event(rho, s, prop).matrix
    c = atom_event_reference(rho, s, prop).matrix
    assert np.abs(a - b).max() < 1e-10
    assert np.abs(b - c).max() < 1e-12


def test_l1_vacuum_is_invariant():
    spec = field_spec(4)
    vac = DensityMatrix.vacuum(spec).matrix
    out = scheme_L1(L1, spec).channel().apply(vac)
    assert np.abs(out - vac).max() < 1e-15


def test_l1_leaves_even_sector_alone_at_second_order():
    # a c+ photon passes through; a c- photon is absorbed with probability 2 (g_a g_b/g)^2 tau^2
    spec = field_spec(4)
    cm, cp = collective_modes(spec)
    vac = fock_state(spec, 0, 0).amplitudes
    plus = cp.dag().matrix @ vac
    minus = cm.dag().matrix @ vac
    ch = scheme_L1(SchemeL1Params(0.01, 0.01), spec).channel()
    out_p = ch.apply(np.outer(plus, plus.conj()))
    out_m = ch.apply(np.outer(minus, minus.conj()))
    assert np.vdot(plus, out_p @ plus).real == pytest.approx(1.0, abs=1e-12)
    assert out_m[0, 0].real == pytest.approx(2 * L1.scaled(0.1).rate_per_event, rel=1e-3)


def test_events_preserve_parity_on_cat():
    spec = field_spec(12)
    rho = cat_state(1.0, spec).dm().matrix
    for s in (scheme_L1(L1, spec), scheme_L2(L2, spec)):
        out = s.channel().apply(rho)
        psi = cat_state(1.0, spec).amplitudes
        assert np.vdot(psi, out @ psi).real > 1 - 1e-4


# ---------------------------------------------------------------- effective rates


def test_effective_rates_reference_values():
    r = effective_rates(L1, L2, TauDistribution())
    assert r.gamma1 == pytest.approx(0.005)
    assert r.gamma2 == pytest.approx(1.25e-3)
    aux = SchemeL2Params(100, 1e-3, 1, 0.1, variant="h_aux")
    assert effective_rates(L1, aux, TauDistribution()).gamma2 == pytest.approx(0.625e-3)


def test_f_vanishes_at_resonant_transit():
    p = SchemeL2Params(gb_tau2=10, gb_over_delta=10 / (2 * math.pi * 100), ga_over_gb=1, omega_tau2=0.1)
    r = effective_rates(L1, p, TauDistribution("delta"))
    assert abs(r.f1) < 1e-12 and abs(r.f2) < 1e-12


def test_gaussian_phase_average():
    X = 2 * math.pi * 1000
    s1, s2 = TauDistribution("gaussian", 0.1 / X).phase_averages(X)
    # (1 - exp(-sigma^2 / 2)) / 2 with phase std sigma = 0.1
    assert s2 == pytest.approx(0.00249376040365884, rel=1e-8)
    assert s2 == pytest.approx(0.1**2 / 4, rel=5e-3)
    assert abs(s1) < 1e-10


def test_flat_phase_average():
    s1, s2 = TauDistribution("flat").phase_averages(1e5)
    assert s2 == pytest.approx(0.5, abs=1e-10)
    assert abs(s1) < 1e-10


def test_gaussian_spread_raises_gamma2():
    g0 = effective_rates(L1, L2, TauDistribution("gaussian", 0.0)).gamma2
    g1 = effective_rates(L1, L2, TauDistribution("gaussian", 0.3)).gamma2
    assert g1 == pytest.approx(g0 * 1.09)


def test_tau_distribution_validation():
    with pytest.raises(InvalidArgumentError):
        TauDistribution("cauchy")
    with pytest.raises(InvalidArgumentError):
        TauDistribution("gaussian", -0.1)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(1.0, 1e6))
def test_resonant_tau_property(x):
    t = resonant_tau(x)
    k = x * t / (2 * math.pi)
    assert abs(k - round(k)) < 1e-9
    assert abs(t - 1) <= math.pi / x + 1e-12 or round(k) == 1


# ---------------------------------------------------------------- schedule


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), r1=st.floats(0, 3), r2=st.floats(0, 3), mode=st.sampled_from(["poisson", "uniform"]))
def test_schedule_properties(seed, r1, r2, mode):
    s = make_schedule(r1, r2, 50.0, mode, seed)
    times = [e.time for e in s.events]
    assert times == sorted(times)
    assert all(0 <= t <= 50.0 for t in times)
    for a, b in zip(s.events, s.events[1:]):
        assert b.time >= a.time + a.duration
    assert s == make_schedule(r1, r2, 50.0, mode, seed)


def test_uniform_schedule_interleaves():
    s = make_schedule(1.0, 1.0, 10.0, "uniform")
    assert [e.atom for e in s.events[:4]] == ["L1", "L2", "L1", "L2"]
    assert s.count("L1") == s.count("L2") == 10
    s = make_schedule(2.0, 1.0, 10.0, "uniform")
    assert s.count("L1") == 20 and s.count("L2") == 10


def test_poisson_counts_are_reasonable():
    s = make_schedule(1.0, 1.0, 4000.0, "poisson", 3)
    for atom in ("L1", "L2"):
        assert abs(s.count(atom) - 4000) < 5 * math.sqrt(4000)


def test_overlapping_transits_dropped():
    s = make_schedule(1.0, 1.0, 200.0, "poisson", 1, transit_time1=0.5, transit_time2=0.5)
    assert s.dropped > 0
    for a, b in zip(s.events, s.events[1:]):
        assert b.time >= a.time + a.duration


def test_schedule_validation():
    with pytest.raises(InvalidArgumentError):
        make_schedule(-1, 1, 10)
    with pytest.raises(InvalidArgumentError):
        make_schedule(1, 1, 10, "bursty")


def test_flat_tau_samples_span_one_period():
    s = make_schedule(0, 1, 500, "uniform", 0, TauDistribution("flat"), delta_tau2=1e3)
    rel = np.array([e.tau_rel for e in s.events])
    assert rel.min() >= 0 and rel.max() <= 2 * math.pi / 1e3


# ---------------------------------------------------------------- run loop


def small_cfg(**kw):
    base = dict(cutoff_a=6, cutoff_b=6, horizon=20, sample_interval=5, seed=1)
    base.update(kw)
    return parse_config(DEFAULT_CONFIG_TEXT).with_overrides(**base)


def test_run_protocol_shape_and_trace():
    rec = run_protocol(small_cfg())
    assert [s.time for s in rec.samples] == [0, 5, 10, 15, 20]
    assert rec.samples[0].fidelity == pytest.approx(0.26580222883, abs=1e-3)
    assert max(s.trace_error for s in rec.samples) < 1e-10
    idx = [s.event_index for s in rec.samples]
    assert idx == sorted(idx) and idx[0] == 0


def test_run_protocol_deterministic_and_path_independent():
    cfg = small_cfg()
    a = run_protocol(cfg, use_numba=False)
    b = run_protocol(cfg, use_numba=False)
    c = run_protocol(cfg, use_numba=True)
    assert a.samples == b.samples
    assert np.allclose(a.fidelity, c.fidelity, atol=1e-12)


def test_run_protocol_seed_changes_trajectory():
    assert run_protocol(small_cfg(seed=1)).samples != run_protocol(small_cfg(seed=2)).samples


def test_run_protocol_decay_only():
    # with no atoms the field is damped exactly: <n_a> = e^{-2 kappa t}
    cfg = small_cfg(r1=0, r2=0, kappa_over_r=0.05, initial_state="one_photon")
    rec = run_protocol(cfg)
    for s in rec.samples:
        assert s.n_a + s.n_b == pytest.approx(math.exp(-0.1 * s.time), abs=1e-12)


def test_run_protocol_trotter_transit_decay():
    a = run_protocol(small_cfg(kappa_over_r=1e-3))
    b = run_protocol(small_cfg(kappa_over_r=1e-3, transit_decay="trotter"))
    assert np.allclose(a.fidelity, b.fidelity, atol=1e-4)
    assert not np.array_equal(a.fidelity, b.fidelity)


def test_run_protocol_records_regime_warning():
    cfg = small_cfg(gb_tau2=1000, ga_over_gb=0.1, scheme_variant="h_aux", validity="warn")
    rec = run_protocol(cfg)
    assert any(w.startswith("regime:") for w in rec.warnings)


def test_run_protocol_truncation_warning():
    cfg = small_cfg(cutoff_a=4, cutoff_b=4, horizon=200, sample_interval=50)
    rec = run_protocol(cfg)
    assert any(w.startswith("truncation-warning") for w in rec.warnings)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twomodecat.errors import InvalidArgumentError, NumericError, TruncationError
from twomodecat.fock import (
    DensityMatrix,
    HilbertSpec,
    Operator,
    StateVector,
    annihilation_op,
    cat_state,
    coherent_state,
    coherent_tail_weight,
    collective_modes,
    embed,
    field_spec,
    fock_state,
    interior_projector,
    jump_operators,
    mode_ops,
    number_op,
    parity_plus,
    product_coherent,
)


def test_annihilation_elements():
    assert annihilation_op(1).matrix[0, 1] == 1.0
    assert annihilation_op(4).matrix[3, 4] == pytest.approx(2.0)
    vac = np.zeros(5)
    vac[0] = 1
    assert np.allclose(annihilation_op(4).matrix @ vac, 0)


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_annihilation_rejects_bad_cutoff(bad):
    with pytest.raises(InvalidArgumentError):
        annihilation_op(bad)


@pytest.mark.parametrize("cutoff", [1, 3, 8])
def test_ccr_except_top_level(cutoff):
    a = annihilation_op(cutoff).matrix
    comm = a @ a.conj().T - a.conj().T @ a
    d = np.diag(comm).real
    assert np.allclose(d[:-1], 1.0)
    assert d[-1] == pytest.approx(-cutoff)
    assert np.allclose(comm - np.diag(d), 0)


def test_spec_dimensions_and_ordering():
    spec = HilbertSpec(2, 3, ("g", "e"))
    assert spec.dims == (3, 4, 2)
    assert spec.dim == 24
    # composite index (n_a * (cutoff_b + 1) + n_b) * levels + level
    a = embed(number_op(2), "a", spec).matrix
    b = embed(number_op(3), "b", spec).matrix
    idx = (1 * 4 + 2) * 2 + 1
    assert a[idx, idx] == 1 and b[idx, idx] == 2


def test_embed_identity_and_trace():
    spec = HilbertSpec(2, 2, ("1", "2", "3"))
    eye = Operator(HilbertSpec(2), np.eye(3))
    assert np.array_equal(embed(eye, "a", spec).matrix, np.eye(spec.dim))
    assert np.trace(embed(number_op(2), "a", spec).matrix).real == pytest.approx(27.0)


def test_embed_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        embed(annihilation_op(3), "a", field_spec(2, 2))


def test_modes_commute():
    a, b = mode_ops(HilbertSpec(3, 2, ("x", "y")))
    assert np.array_equal(a.matrix @ b.matrix, b.matrix @ a.matrix)


def test_collective_modes():
    spec = field_spec(3)
    cm, cp = collective_modes(spec)
    vac = fock_state(spec, 0, 0).amplitudes
    sym = (fock_state(spec, 1, 0).amplitudes + fock_state(spec, 0, 1).amplitudes) / math.sqrt(2)
    assert np.allclose(cm.matrix @ sym, 0)
    assert np.allclose(cp.dag().matrix @ vac, sym)
    assert np.vdot(vac, cm.matrix @ cm.dag().matrix @ vac).real == pytest.approx(1.0)
    P = interior_projector(spec, margin=1)
    comm = cm.matrix @ cp.dag().matrix - cp.dag().matrix @ cm.matrix
    assert np.allclose(P @ comm @ P, 0)


def test_operator_hermiticity_enforced():
    with pytest.raises(NumericError):
        Operator(HilbertSpec(2), annihilation_op(2).matrix, hermitian=True)


def test_operator_matrix_read_only():
    op = number_op(2)
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 3


def test_state_vector_norm_checked():
    with pytest.raises(NumericError):
        StateVector(HilbertSpec(2), np.array([1.0, 1.0, 0.0]))
    with pytest.raises(InvalidArgumentError):
        StateVector(HilbertSpec(2), np.array([1.0, 0.0]))


def test_density_matrix_checks():
    spec = field_spec(2)
    DensityMatrix.vacuum(spec).check()
    bad = DensityMatrix(spec, np.diag([1.5, -0.5] + [0.0] * 7))
    with pytest.raises(NumericError):
        bad.check()


# ---------------------------------------------------------------- coherent and cat states


def test_coherent_vacuum():
    assert np.allclose(coherent_state(0.0, 5).amplitudes, np.eye(6)[0])


def test_coherent_tail_alpha1_cutoff16():
    # sum_{n > 16} e^-1 / n!  (independent high-precision value 1.0949e-15)
    assert coherent_tail_weight(1.0, 16) == pytest.approx(1.0949201303781835e-15, rel=1e-6)
    assert coherent_tail_weight(1.0, 16) < 1e-10


def test_coherent_mean_photon():
    psi = coherent_state(1.0, 16).amplitudes
    assert np.sum(np.arange(17) * np.abs(psi) ** 2) == pytest.approx(1.0, abs=1e-9)


def test_coherent_truncation_error():
    with pytest.raises(TruncationError):
        coherent_state(3.0, 8)
    # explicit tolerance lets a heavy tail through
    coherent_state(3.0, 30, tail_tol=1e-6)


def test_cat_alpha_zero_is_vacuum():
    spec = field_spec(4)
    assert np.allclose(cat_state(0.0, spec).amplitudes, fock_state(spec, 0, 0).amplitudes)
    with pytest.raises(NumericError):
        cat_state(0.0, spec, parity=-1)


def test_cat_dark_and_parity():
    spec = field_spec(16)
    psi = cat_state(1.0, spec).amplitudes
    c1, c2 = jump_operators(1.0, spec)
    assert np.linalg.norm(c1.matrix @ psi) < 1e-6
    assert np.linalg.norm(c2.matrix @ psi) < 1e-6
    assert np.vdot(psi, parity_plus(spec).matrix @ psi).real == pytest.approx(1.0, abs=1e-6)


def test_cat_residual_decreases_with_cutoff():
    res = []
    for c in (6, 8, 10, 12, 14):
        spec = field_spec(c)
        psi = cat_state(1.0, spec).amplitudes
        c1, c2 = jump_operators(1.0, spec)
        res.append(np.linalg.norm(c2.matrix @ psi) + np.linalg.norm(c1.matrix @ psi))
    assert all(x > y for x, y in zip(res, res[1:]))


@settings(max_examples=25, deadline=None)
@given(
    alpha=st.floats(0.1, 1.0),
    theta=st.floats(0, 2 * math.pi),
    phase=st.floats(0, 2 * math.pi),
)
def test_dark_subspace_superpositions(alpha, theta, phase):
    spec = field_spec(16)
    p = product_coherent(alpha, spec).amplitudes
    m = product_coherent(-alpha, spec).amplitudes
    v = math.cos(theta) * p + math.sin(theta) * np.exp(1j * phase) * m
    v /= np.linalg.norm(v)
    for C in jump_operators(alpha, spec):
        assert np.linalg.norm(C.matrix @ v) < 1e-6


# ---------------------------------------------------------------- jump operators and parity


def test_jump_operator_identities():
    spec = field_spec(6)
    c1, c2 = jump_operators(0.8, spec)
    cm, cp = collective_modes(spec)
    assert np.array_equal(c1.matrix, cm.matrix)
    vac = fock_state(spec, 0, 0).amplitudes
    assert np.allclose(c2.matrix @ vac, -2 * 0.8**2 * vac)
    P = interior_projector(spec, margin=2)
    alt = cp.matrix @ cp.matrix - cm.matrix @ cm.matrix - 2 * 0.8**2 * np.eye(spec.dim)
    assert np.allclose(P @ (c2.matrix - alt) @ P, 0, atol=1e-12)


def test_parity_basic():
    spec = field_spec(5)
    Pi = parity_plus(spec).matrix
    vac = fock_state(spec, 0, 0).amplitudes
    _, cp = collective_modes(spec)
    one = cp.dag().matrix @ vac
    assert np.allclose(Pi @ vac, vac)
    assert np.allclose(Pi @ one, -one)
    P = interior_projector(spec, margin=0)
    assert np.allclose(P @ (Pi @ Pi - np.eye(spec.dim)) @ P, 0, atol=1e-8)


def test_parity_warns_at_truncation_edge(caplog):
    from twomodecat.fock import _parity_matrix

    _parity_matrix.cache_clear()
    with caplog.at_level("WARNING"):
        parity_plus(field_spec(3))
    assert "truncation edge" in caplog.text


@pytest.mark.parametrize("cutoff", [6, 10])
def test_parity_commutes_with_jumps_on_interior(cutoff):
    spec = field_spec(cutoff)
    Pi = parity_plus(spec).matrix
    P = interior_projector(spec, margin=2)
    for C in jump_operators(0.9, spec):
        assert np.linalg.norm(P @ (Pi @ C.matrix - C.matrix @ Pi) @ P) < 1e-8


def test_parity_embeds_with_atom():
    spec = HilbertSpec(3, 3, ("1", "2"))
    Pi = parity_plus(spec).matrix
    assert Pi.shape == (spec.dim, spec.dim)
    assert np.allclose(Pi, np.kron(parity_plus(spec.field).matrix, np.eye(2)))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twomodecat.errors import InvalidArgumentError
from twomodecat.fock import DensityMatrix, HilbertSpec, cat_state, field_spec, fock_state
from twomodecat.observables import (
    COLUMNS,
    ObservableContext,
    ObservableSample,
    TrajectoryRecord,
    fidelity,
    mean_photons,
    parity_expectation,
    purity,
)


def test_vacuum_overlap_with_cat():
    # 2 e^{-2} / (1 + e^{-4}) at alpha = 1; independent value to 17 digits
    spec = field_spec(16)
    f = fidelity(DensityMatrix.vacuum(spec), cat_state(1.0, spec))
    assert f == pytest.approx(0.26580222883407969, abs=1e-9)


def test_cat_mean_photons():
    # tanh(|alpha|^2 * 2) per mode for the even cat at alpha = 1
    spec = field_spec(16)
    na, nb = mean_photons(cat_state(1.0, spec).dm())
    assert na == pytest.approx(0.964027580075816884, abs=1e-9)
    assert nb == pytest.approx(na, abs=1e-12)


def test_parity_and_purity():
    spec = field_spec(4)
    assert parity_expectation(DensityMatrix.vacuum(spec)) == pytest.approx(1.0)
    assert parity_expectation(fock_state(spec, 1, 0).dm()) == pytest.approx(0.0, abs=1e-12)
    mix = 0.5 * (fock_state(spec, 0, 0).dm().matrix + fock_state(spec, 2, 0).dm().matrix)
    assert purity(DensityMatrix(spec, mix)) == pytest.approx(0.5)


def test_field_only_guard():
    with pytest.raises(InvalidArgumentError):
        mean_photons(DensityMatrix.vacuum(HilbertSpec(2)))
    with pytest.raises(InvalidArgumentError):
        fidelity(DensityMatrix.vacuum(field_spec(2)), cat_state(0.5, field_spec(3)))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_context_matches_standalone(seed):
    spec = field_spec(4)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(spec.dim,) * 2) + 1j * rng.normal(size=(spec.dim,) * 2)
    rho = x @ x.conj().T
    rho /= np.trace(rho)
    dm = DensityMatrix(spec, rho)
    target = cat_state(0.8, spec)
    s = ObservableContext(spec, target).sample(rho, 1.5, 3)
    assert s.fidelity == pytest.approx(fidelity(dm, target), abs=1e-12)
    assert (s.n_a, s.n_b) == pytest.approx(mean_photons(dm), abs=1e-12)
    assert s.parity == pytest.approx(parity_expectation(dm), abs=1e-12)
    assert s.purity == pytest.approx(purity(dm), abs=1e-12)
    assert 0 <= s.fidelity <= 1 + 1e-12 and 0 < s.purity <= 1 + 1e-12
    assert s.trace_error < 1e-12


def test_record_helpers():
    rec = TrajectoryRecord()
    for i, f in enumerate([0.2, 0.9, 0.5]):
        rec.append(ObservableSample(float(i), i, f, 1.0, 0.0, 0.0, 1.0, 0.0))
    assert len(rec) == 3
    assert rec.peak() == (0.9, 1.0)
    assert rec.at(1.9).fidelity == 0.5
    assert list(rec.column("event_index")) == [0, 1, 2]
    assert tuple(ObservableSample.__dataclass_fields__) == COLUMNS

"""Scalar diagnostics of field states and the trajectory record."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .fock import DensityMatrix, HilbertSpec, StateVector, parity_plus

COLUMNS = ("time", "event_index", "fidelity", "purity", "n_a", "n_b", "parity", "trace_error")


def _field_only(rho: DensityMatrix):
    if not rho.space.has_both_modes or rho.space.atom_levels:
        raise InvalidArgumentError("expected a two-mode field density matrix")


def fidelity(rho: DensityMatrix, target: StateVector) -> float:
    """<psi|rho|psi> for a pure target."""
    if rho.space != target.space:
        raise InvalidArgumentError(f"space mismatch: {rho.space} vs {target.space}")
    psi = target.amplitudes
    return float(np.vdot(psi, rho.matrix @ psi).real)


def mean_photons(rho: DensityMatrix) -> tuple[float, float]:
    _field_only(rho)
    na, nb = rho.space.cutoff_a + 1, rho.space.cutoff_b + 1
    p = np.diag(rho.matrix).real.reshape(na, nb)
    return float(p.sum(axis=1) @ np.arange(na)), float(p.sum(axis=0) @ np.arange(nb))


def parity_expectation(rho: DensityMatrix) -> float:
    _field_only(rho)
    return float(np.vdot(parity_plus(rho.space).matrix, rho.matrix).real)


def purity(rho: DensityMatrix) -> float:
    return float(np.vdot(rho.matrix, rho.matrix).real)


@dataclass(frozen=True)
class ObservableSample:
    time: float
    event_index: int
    fidelity: float
    purity: float
    n_a: float
    n_b: float
    parity: float
    trace_error: float


class ObservableContext:
    """Precomputed target, parity and number diagonals for fast per-sample evaluation."""

    def __init__(self, spec: HilbertSpec, target: StateVector):
        if target.space != spec:
            raise InvalidArgumentError("target state does not live on the field space")
        self.spec = spec
        self.psi = np.asarray(target.amplitudes)
        self.parity = parity_plus(spec).matrix
        na, nb = spec.cutoff_a + 1, spec.cutoff_b + 1
        self.n_a = np.repeat(np.arange(na, dtype=float), nb)
        self.n_b = np.tile(np.arange(nb, dtype=float), na)

    def sample(self, rho: np.ndarray, time: float, event_index: int) -> ObservableSample:
        d = np.diag(rho).real
        return ObservableSample(
            time=float(time),
            event_index=int(event_index),
            fidelity=float(np.vdot(self.psi, rho @ self.psi).real),
            purity=float(np.vdot(rho, rho).real),
            n_a=float(d @ self.n_a),
            n_b=float(d @ self.n_b),
            parity=float(np.vdot(self.parity, rho).real),
            trace_error=float(abs(np.trace(rho) - 1.0)),
        )

    def top_level_population(self, rho: np.ndarray) -> float:
        """Largest population in the two highest Fock levels of either mode."""
        na, nb = self.spec.cutoff_a + 1, self.spec.cutoff_b + 1
        p = np.diag(rho).real.reshape(na, nb)
        return float(max(p[-2:, :].sum(), p[:, -2:].sum()))


@dataclass
class TrajectoryRecord:
    samples: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, s: ObservableSample):
        self.samples.append(s)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    @property
    def times(self) -> np.ndarray:
        return self.column("time")

    @property
    def fidelity(self) -> np.ndarray:
        return self.column("fidelity")

    def peak(self) -> tuple[float, float]:
        """(peak fidelity, time of peak)."""
        f = self.fidelity
        i = int(np.argmax(f))
        return float(f[i]), float(self.samples[i].time)

    def at(self, t: float) -> ObservableSample:
        """Sample closest to time ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        return self.samples[i]

    def __len__(self):
        return len(self.samples)

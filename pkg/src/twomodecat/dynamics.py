"""Lindblad generators, RK4 integration, exact transit propagators and cavity damping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError, NumericError, StabilityError
from .fock import DensityMatrix, HilbertSpec, Operator, mode_ops

log = logging.getLogger(__name__)

# fixed-step RK4 is stable on the negative real axis up to ~2.78
RK4_DISSIPATIVE_LIMIT = 2.5
RK4_COHERENT_LIMIT = 0.1


@dataclass(frozen=True, eq=False)
class Generator:
    """L rho = -i[H, rho] + sum_j rate_j D[C_j] rho + kappa K rho.

    ``D[C] rho = 2 C rho C^dag - {C^dag C, rho}`` and ``K = D[a] + D[b]``.
    """

    space: HilbertSpec
    hamiltonian: Operator | None = None
    channels: tuple = ()
    decay_kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple((float(r), C) for r, C in self.channels))
        if self.hamiltonian is not None and self.hamiltonian.space != self.space:
            raise InvalidArgumentError("Hamiltonian lives on a different space")
        for rate, C in self.channels:
            if rate < 0:
                raise InvalidArgumentError(f"negative rate {rate}")
            if C.space != self.space:
                raise InvalidArgumentError("jump operator lives on a different space")
        if self.decay_kappa < 0:
            raise InvalidArgumentError(f"kappa must be >= 0, got {self.decay_kappa}")
        if self.decay_kappa > 0 and not self.space.has_field:
            raise InvalidArgumentError("cavity decay needs field modes")

    def all_channels(self) -> list[tuple[float, np.ndarray]]:
        """Explicit (rate, matrix) list including cavity decay of each mode."""
        out = [(r, C.matrix) for r, C in self.channels if r > 0]
        if self.decay_kappa > 0:
            out += [(self.decay_kappa, m) for m in _field_lowering(self.space)]
        return out

    def effective_hamiltonian(self) -> np.ndarray:
        """G = -iH - sum_j rate_j C_j^dag C_j."""
        d = self.space.dim
        G = np.zeros((d, d), complex)
        if self.hamiltonian is not None:
            G -= 1j * self.hamiltonian.matrix
        for r, C in self.all_channels():
            G -= r * (C.conj().T @ C)
        return G

    def kernel(self, use_numba=None) -> _kernels.LindbladKernel:
        ch = self.all_channels()
        return _kernels.LindbladKernel(
            self.effective_hamiltonian(), [C for _, C in ch], [r for r, _ in ch], use_numba=use_numba
        )

    def coherent_scale(self) -> float:
        return 0.0 if self.hamiltonian is None else self.hamiltonian.norm()

    def dissipative_scale(self) -> float:
        """Largest population decay rate, 2 ||sum rate C^dag C||."""
        ch = self.all_channels()
        if not ch:
            return 0.0
        M = sum(r * (C.conj().T @ C) for r, C in ch)
        return 2.0 * float(np.linalg.eigvalsh(0.5 * (M + M.conj().T)).max())

    def stable_dt(self, safety: float = 0.8) -> float:
        limits = [np.inf]
        if self.coherent_scale() > 0:
            limits.append(RK4_COHERENT_LIMIT / self.coherent_scale())
        if self.dissipative_scale() > 0:
            limits.append(RK4_DISSIPATIVE_LIMIT / self.dissipative_scale())
        return safety * min(limits)


def _field_lowering(spec: HilbertSpec) -> list[np.ndarray]:
    from .fock import annihilation_op, embed

    out = []
    for slot, c in (("a", spec.cutoff_a), ("b", spec.cutoff_b)):
        if c is not None:
            out.append(embed(annihilation_op(c), slot, spec).matrix)
    return out


@dataclass(frozen=True, eq=False)
class Propagator:
    unitary: Operator
    transit_time: float

    def __post_init__(self):
        U = self.unitary.matrix
        err = np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]), 2)
        if err > 1e-10:
            raise NumericError(f"propagator not unitary (||U^dag U - I|| = {err:.3g})")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigendecomposition H = V diag(E) V^dag, reused for every transit time."""

    space: HilbertSpec
    energies: np.ndarray
    vectors: np.ndarray

    def unitary(self, tau: float) -> np.ndarray:
        V = self.vectors
        return (V * np.exp(-1j * self.energies * tau)) @ V.conj().T


def _check_same(x, y):
    if x.space != y.space:
        raise InvalidArgumentError(f"space mismatch: {x.space} vs {y.space}")


# ---------------------------------------------------------------- superoperators


def _dissipator(C, rho):
    CdC = C.conj().T @ C
    return 2.0 * C @ rho @ C.conj().T - CdC @ rho - rho @ CdC


def dissipator(jump: Operator, rho: DensityMatrix) -> np.ndarray:
    """Increment 2 C rho C^dag - {C^dag C, rho} (traceless, Hermitian)."""
    _check_same(jump, rho)
    return _dissipator(jump.matrix, rho.matrix)


def cavity_decay_term(rho: DensityMatrix, kappa: float) -> np.ndarray:
    """kappa K rho with K = D[a] + D[b]."""
    if kappa < 0:
        raise InvalidArgumentError(f"kappa must be >= 0, got {kappa}")
    if not rho.space.has_field:
        raise InvalidArgumentError("cavity decay needs field modes")
    out = np.zeros_like(rho.matrix)
    for C in _field_lowering(rho.space):
        out += _dissipator(C, rho.matrix)
    return kappa * out


def apply_generator(gen: Generator, rho: DensityMatrix) -> np.ndarray:
    """Dense reference evaluation of L rho, independent of the integration kernels."""
    _check_same(gen, rho)
    m = rho.matrix
    out = np.zeros_like(m)
    if gen.hamiltonian is not None:
        H = gen.hamiltonian.matrix
        out += -1j * (H @ m - m @ H)
    for rate, C in gen.channels:
        out += rate * _dissipator(C.matrix, m)
    if gen.decay_kappa:
        out += cavity_decay_term(rho, gen.decay_kappa)
    return out


def steady_state_residual(gen: Generator, rho: DensityMatrix) -> float:
    """Frobenius norm ||L rho||; zero exactly at a fixed point."""
    return float(np.linalg.norm(apply_generator(gen, rho)))


# ---------------------------------------------------------------- integration


def check_step(gen: Generator, dt: float) -> None:
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    h = gen.coherent_scale()
    if dt * h >= RK4_COHERENT_LIMIT:
        raise StabilityError(f"dt*||H|| = {dt * h:.3g} >= {RK4_COHERENT_LIMIT}")
    lam = gen.dissipative_scale()
    if dt * lam >= RK4_DISSIPATIVE_LIMIT:
        raise StabilityError(f"dt * max decay rate = {dt * lam:.3g} >= {RK4_DISSIPATIVE_LIMIT}")


def rk4_steps(kernel, rho: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    """Advance a raw density matrix; re-Hermitize and reject non-finite output."""
    out = kernel.rk4(rho, dt, n_steps)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite entries during RK4 integration")
    return 0.5 * (out + out.conj().T)


def rk4_evolve(gen: Generator, rho: DensityMatrix, duration: float, dt: float, use_numba=None) -> DensityMatrix:
    """Fixed-step RK4 over ``duration``; the last step is shortened to land exactly."""
    _check_same(gen, rho)
    check_step(gen, dt)
    if duration < 0:
        raise InvalidArgumentError("duration must be >= 0")
    if duration == 0 or (gen.hamiltonian is None and not gen.all_channels()):
        return DensityMatrix(rho.space, rho.matrix)
    kernel = gen.kernel(use_numba)
    n_full = int(np.floor(duration / dt + 1e-12))
    m = rk4_steps(kernel, rho.matrix, dt, n_full)
    rest = duration - n_full * dt
    if rest > 1e-14 * max(1.0, duration):
        m = rk4_steps(kernel, m, rest, 1)
    drift = abs(np.trace(m) - np.trace(rho.matrix))
    log.debug("rk4_evolve: %d steps, trace drift %.3g", n_full, drift)
    return DensityMatrix(rho.space, m)


# ---------------------------------------------------------------- exact transit evolution


def diagonalize(H: Operator, tol: float = 1e-10) -> Spectrum:
    M = H.matrix
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M - M.conj().T).max(initial=0.0) > tol * scale:
        raise InvalidArgumentError("transit Hamiltonian is not Hermitian")
    try:
        E, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    return Spectrum(H.space, E, V)


def transit_propagator(H: Operator, tau: float, spectrum: Spectrum | None = None) -> Propagator:
    """U = exp(-i H tau) from the eigendecomposition of H (hbar = 1)."""
    if spectrum is None:
        spectrum = diagonalize(H)
    return Propagator(Operator(H.space, spectrum.unitary(tau)), float(tau))


@dataclass(frozen=True, eq=False)
class SectorSpectrum:
    """Eigendecomposition of H restricted to each sector of a conserved charge."""

    space: HilbertSpec
    sectors: tuple  # (indices, energies, vectors) per charge value

    def blocks(self, tau: float):
        for idx, E, V in self.sectors:
            yield idx, (V * np.exp(-1j * E * tau)) @ V.conj().T

    def unitary(self, tau: float) -> np.ndarray:
        d = self.space.dim
        U = np.zeros((d, d), complex)
        for idx, Ub in self.blocks(tau):
            U[np.ix_(idx, idx)] = Ub
        return U


def diagonalize_sectors(H: Operator, charge: np.ndarray, tol: float = 1e-10) -> SectorSpectrum:
    """Block eigendecomposition using a diagonal conserved charge.

    Much cheaper than :func:`diagonalize` and keeps the propagator exactly block
    structured; raises if H couples different charge values.
    """
    M = H.matrix
    charge = np.asarray(charge)
    if charge.shape != (M.shape[0],):
        raise InvalidArgumentError("charge must be a vector over the composite basis")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M - M.conj().T).max(initial=0.0) > tol * scale:
        raise InvalidArgumentError("transit Hamiltonian is not Hermitian")
    rows, cols = np.nonzero(np.abs(M) > tol * scale)
    if np.any(charge[rows] != charge[cols]):
        raise InvalidArgumentError("Hamiltonian does not conserve the given charge")
    sectors = []
    for q in np.unique(charge):
        idx = np.flatnonzero(charge == q)
        B = M[np.ix_(idx, idx)]
        try:
            E, V = np.linalg.eigh(0.5 * (B + B.conj().T))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigendecomposition failed: {exc}") from exc
        sectors.append((idx, E, V))
    return SectorSpectrum(H.space, tuple(sectors))


# ---------------------------------------------------------------- partial trace and damping


def partial_trace_atom(matrix: np.ndarray, spec: HilbertSpec) -> np.ndarray:
    df, m = spec.field.dim, spec.n_levels
    return np.trace(matrix.reshape(df, m, df, m), axis1=1, axis2=3)


def damp_field(rho: np.ndarray, spec: HilbertSpec, kappa: float, t: float, use_numba=None) -> np.ndarray:
    """Exact action of exp(t kappa K) on a two-mode field density matrix."""
    if kappa < 0 or t < 0:
        raise InvalidArgumentError("kappa and t must be >= 0")
    if kappa == 0 or t == 0:
        return rho
    eta = float(np.exp(-2.0 * kappa * t))
    return _kernels.amplitude_damp(rho, spec.cutoff_a, spec.cutoff_b, eta, eta, use_numba=use_numba)

"""Truncated two-mode Fock spaces, mode operators and special states.

Basis ordering is fixed: mode A is the slowest index, then mode B, then the
atom.  A composite basis index is therefore ``(n_a * (cutoff_b + 1) + n_b) *
n_levels + atom_level``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import pdtrc

from .errors import InvalidArgumentError, NumericError, TruncationError

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10


@dataclass(frozen=True)
class HilbertSpec:
    """Shape of a (possibly partial) field-plus-atom Hilbert space.

    A ``None`` cutoff means the mode is absent, so single-mode and
    atom-only spaces are described by the same type.
    """

    cutoff_a: int | None = None
    cutoff_b: int | None = None
    atom_levels: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("cutoff_a", "cutoff_b"):
            c = getattr(self, name)
            if c is not None and (int(c) != c or c < 1):
                raise InvalidArgumentError(f"{name} must be an integer >= 1, got {c!r}")
        object.__setattr__(self, "atom_levels", tuple(self.atom_levels))
        if len(set(self.atom_levels)) != len(self.atom_levels):
            raise InvalidArgumentError("atom level labels must be unique")
        if not self.slots:
            raise InvalidArgumentError("empty Hilbert space")

    @property
    def slots(self) -> tuple[str, ...]:
        out = []
        if self.cutoff_a is not None:
            out.append("a")
        if self.cutoff_b is not None:
            out.append("b")
        if self.atom_levels:
            out.append("atom")
        return tuple(out)

    def slot_dim(self, slot: str) -> int:
        if slot == "a" and self.cutoff_a is not None:
            return self.cutoff_a + 1
        if slot == "b" and self.cutoff_b is not None:
            return self.cutoff_b + 1
        if slot == "atom" and self.atom_levels:
            return len(self.atom_levels)
        if slot == "field" and self.has_field:
            return self.field.dim
        raise InvalidArgumentError(f"slot {slot!r} not present in {self}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.slot_dim(s) for s in self.slots)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def has_field(self) -> bool:
        return self.cutoff_a is not None or self.cutoff_b is not None

    @property
    def has_both_modes(self) -> bool:
        return self.cutoff_a is not None and self.cutoff_b is not None

    @property
    def n_levels(self) -> int:
        return max(1, len(self.atom_levels))

    @property
    def field(self) -> HilbertSpec:
        return HilbertSpec(self.cutoff_a, self.cutoff_b)

    def with_atom(self, levels) -> HilbertSpec:
        return HilbertSpec(self.cutoff_a, self.cutoff_b, tuple(levels))

    def level_index(self, label: str) -> int:
        try:
            return self.atom_levels.index(label)
        except ValueError:
            raise InvalidArgumentError(f"unknown atom level {label!r}") from None


def field_spec(cutoff_a: int = 16, cutoff_b: int | None = None) -> HilbertSpec:
    return HilbertSpec(cutoff_a, cutoff_a if cutoff_b is None else cutoff_b)


def _frozen(arr, dtype=complex) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def _check_space(x, y):
    if x.space != y.space:
        raise InvalidArgumentError(f"space mismatch: {x.space} vs {y.space}")


@dataclass(frozen=True, eq=False)
class Operator:
    space: HilbertSpec
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.space.dim
        if m.shape != (d, d):
            raise InvalidArgumentError(f"matrix shape {m.shape} does not match space dimension {d}")
        if self.hermitian:
            dev = np.abs(m - m.conj().T).max(initial=0.0)
            scale = max(1.0, np.abs(m).max(initial=0.0))
            if dev > HERMITIAN_TOL * scale:
                raise NumericError(f"operator expected Hermitian, deviation {dev:.3g}")
        object.__setattr__(self, "matrix", m)

    def dag(self) -> Operator:
        return Operator(self.space, self.matrix.conj().T, self.hermitian)

    def __add__(self, other):
        if isinstance(other, Operator):
            _check_space(self, other)
            return Operator(self.space, self.matrix + other.matrix)
        return Operator(self.space, self.matrix + other * np.eye(self.space.dim))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Operator(self.space, -self.matrix, self.hermitian)

    def __mul__(self, scalar):
        if isinstance(scalar, Operator):
            return NotImplemented
        return Operator(self.space, scalar * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Operator(self.space, self.matrix / scalar)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _check_space(self, other)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            _check_space(self, other)
            return StateVector(self.space, self.matrix @ other.amplitudes, normalized=False)
        return NotImplemented

    def norm(self, ord=2) -> float:
        return float(np.linalg.norm(self.matrix, ord))


@dataclass(frozen=True, eq=False)
class StateVector:
    space: HilbertSpec
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        v = _frozen(self.amplitudes)
        if v.shape != (self.space.dim,):
            raise InvalidArgumentError(f"vector shape {v.shape} does not match space dimension {self.space.dim}")
        if self.normalized and abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
            raise NumericError(f"state declared normalized has norm {np.linalg.norm(v):.12g}")
        object.__setattr__(self, "amplitudes", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> StateVector:
        n = self.norm()
        if n == 0.0:
            raise NumericError("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / n)

    def inner(self, other: StateVector) -> complex:
        _check_space(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def dm(self) -> DensityMatrix:
        v = self.amplitudes
        return DensityMatrix(self.space, np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.space.dim
        if m.shape != (d, d):
            raise InvalidArgumentError(f"matrix shape {m.shape} does not match space dimension {d}")
        object.__setattr__(self, "matrix", m)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def check(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8) -> None:
        """Validate Hermiticity, unit trace and positivity; raise on failure."""
        m = self.matrix
        dev = np.abs(m - m.conj().T).max()
        if dev > herm_tol:
            raise NumericError(f"density matrix not Hermitian (deviation {dev:.3g})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > trace_tol:
            raise NumericError(f"density matrix trace {tr:.12g}")
        lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
        if lam < -eig_tol:
            raise NumericError(f"density matrix has negative eigenvalue {lam:.3g}")

    @classmethod
    def vacuum(cls, spec: HilbertSpec) -> DensityMatrix:
        m = np.zeros((spec.dim, spec.dim), complex)
        m[0, 0] = 1.0
        return cls(spec, m)


# ---------------------------------------------------------------- operators


def annihilation_op(cutoff: int) -> Operator:
    if int(cutoff) != cutoff or cutoff < 1:
        raise InvalidArgumentError(f"cutoff must be an integer >= 1, got {cutoff!r}")
    return Operator(HilbertSpec(cutoff), np.diag(np.sqrt(np.arange(1, cutoff + 1)), 1))


def number_op(cutoff: int) -> Operator:
    return Operator(HilbertSpec(cutoff), np.diag(np.arange(cutoff + 1.0)), hermitian=True)


def atom_op(levels, bra: str, ket: str | None = None) -> Operator:
    """Atomic flip operator |bra><ket| (a projector when ``ket`` is omitted)."""
    spec = HilbertSpec(atom_levels=tuple(levels))
    j = spec.level_index(bra)
    k = spec.level_index(bra if ket is None else ket)
    m = np.zeros((spec.dim, spec.dim))
    m[j, k] = 1.0
    return Operator(spec, m, hermitian=(j == k))


def embed(op: Operator, target_slot: str, spec: HilbertSpec) -> Operator:
    """Tensor ``op`` into ``spec`` with identities on every other slot.

    ``target_slot`` is one of ``"a"``, ``"b"``, ``"atom"`` or ``"field"``
    (both modes at once).
    """
    d = spec.slot_dim(target_slot)
    if op.matrix.shape[0] != d:
        raise InvalidArgumentError(
            f"operator dimension {op.matrix.shape[0]} does not match slot {target_slot!r} dimension {d}"
        )
    if target_slot == "field":
        factors = [op.matrix, np.eye(spec.n_levels)] if spec.atom_levels else [op.matrix]
    else:
        factors = [op.matrix if s == target_slot else np.eye(spec.slot_dim(s)) for s in spec.slots]
    m = factors[0]
    for f in factors[1:]:
        m = np.kron(m, f)
    return Operator(spec, m, op.hermitian)


def mode_ops(spec: HilbertSpec) -> tuple[Operator, Operator]:
    """Lowering operators ``a`` and ``b`` embedded into ``spec``."""
    if not spec.has_both_modes:
        raise InvalidArgumentError("both field modes are required")
    return (
        embed(annihilation_op(spec.cutoff_a), "a", spec),
        embed(annihilation_op(spec.cutoff_b), "b", spec),
    )


def collective_modes(spec: HilbertSpec) -> tuple[Operator, Operator]:
    """Return ``(c_minus, c_plus)`` with c_pm = (a +- b)/sqrt(2)."""
    a, b = mode_ops(spec)
    return (a - b) / np.sqrt(2), (a + b) / np.sqrt(2)


def jump_operators(alpha: complex, spec: HilbertSpec) -> tuple[Operator, Operator]:
    """Jump operators C1 = (a - b)/sqrt(2) and C2 = 2(ab - alpha^2)."""
    a, b = mode_ops(spec)
    c1 = (a - b) / np.sqrt(2)
    c2 = 2.0 * (a @ b) - 2.0 * alpha**2
    return c1, c2


# ---------------------------------------------------------------- states


def coherent_tail_weight(alpha: complex, cutoff: int) -> float:
    """Poisson weight of Fock levels above ``cutoff`` for a coherent state."""
    return float(pdtrc(cutoff, abs(alpha) ** 2))


def _raw_coherent(alpha: complex, cutoff: int) -> np.ndarray:
    c = np.empty(cutoff + 1, complex)
    c[0] = np.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, cutoff + 1):
        c[n] = c[n - 1] * alpha / np.sqrt(n)
    return c


def _check_tail(alpha, cutoff, tail_tol):
    if tail_tol is None:
        if abs(alpha) ** 2 > cutoff / 4:
            raise TruncationError(f"|alpha|^2 = {abs(alpha) ** 2:.4g} exceeds cutoff/4 = {cutoff / 4:.4g}")
    else:
        tail = coherent_tail_weight(alpha, cutoff)
        if tail > tail_tol:
            raise TruncationError(f"coherent tail weight {tail:.3g} above tolerance {tail_tol:.3g}")


def coherent_state(alpha: complex, cutoff: int, tail_tol: float | None = None) -> StateVector:
    """Coherent state renormalized on the truncated space.

    With ``tail_tol=None`` the cutoff is accepted when |alpha|^2 <= cutoff/4;
    otherwise the raw tail weight (see ``coherent_tail_weight``) must not
    exceed ``tail_tol``.
    """
    if int(cutoff) != cutoff or cutoff < 1:
        raise InvalidArgumentError(f"cutoff must be an integer >= 1, got {cutoff!r}")
    _check_tail(alpha, cutoff, tail_tol)
    c = _raw_coherent(alpha, cutoff)
    return StateVector(HilbertSpec(cutoff), c / np.linalg.norm(c))


def cat_normalization(alpha: complex, parity: int = 1) -> float:
    return float(np.sqrt(2 * (1 + parity * np.exp(-4 * abs(alpha) ** 2))))


def product_coherent(alpha: complex, spec: HilbertSpec, tail_tol=None) -> StateVector:
    """Normalized |alpha>_A |alpha>_B on the truncated field space."""
    _check_tail(alpha, spec.cutoff_a, tail_tol)
    _check_tail(alpha, spec.cutoff_b, tail_tol)
    v = np.kron(_raw_coherent(alpha, spec.cutoff_a), _raw_coherent(alpha, spec.cutoff_b))
    return StateVector(spec.field, v / np.linalg.norm(v))


def cat_state(alpha: complex, spec: HilbertSpec, parity: int = 1, tail_tol=None) -> StateVector:
    """Two-mode cat (|alpha,alpha> + parity |-alpha,-alpha>)/N, normalized numerically.

    ``parity=-1`` gives the odd cat, which is undefined at alpha = 0.
    """
    if not spec.has_both_modes or spec.atom_levels:
        raise InvalidArgumentError("cat_state needs a two-mode field space without atom")
    if parity not in (1, -1):
        raise InvalidArgumentError("parity must be +1 or -1")
    for c in (spec.cutoff_a, spec.cutoff_b):
        _check_tail(alpha, c, tail_tol)
    plus = np.kron(_raw_coherent(alpha, spec.cutoff_a), _raw_coherent(alpha, spec.cutoff_b))
    minus = np.kron(_raw_coherent(-alpha, spec.cutoff_a), _raw_coherent(-alpha, spec.cutoff_b))
    v = plus + parity * minus
    n = np.linalg.norm(v)
    if n < 1e-300:
        raise NumericError("odd cat vanishes at alpha = 0")
    return StateVector(spec, v / n)


def fock_state(spec: HilbertSpec, n_a: int, n_b: int) -> StateVector:
    v = np.zeros(spec.dim, complex)
    v[n_a * (spec.cutoff_b + 1) + n_b] = 1.0
    return StateVector(spec, v)


# ---------------------------------------------------------------- parity


def total_number(spec: HilbertSpec) -> np.ndarray:
    """n_a + n_b for every field basis index."""
    na = np.arange(spec.cutoff_a + 1)
    nb = np.arange(spec.cutoff_b + 1)
    return (na[:, None] + nb[None, :]).ravel()


@lru_cache(maxsize=16)
def _parity_matrix(cutoff_a: int, cutoff_b: int) -> np.ndarray:
    spec = HilbertSpec(cutoff_a, cutoff_b)
    _, cp = collective_modes(spec)
    n_plus = (cp.dag() @ cp).matrix
    # c+^dag c+ conserves n_a + n_b, so diagonalize one total-number block at a time.
    tot = total_number(spec)
    out = np.zeros_like(n_plus)
    worst = 0.0
    for n in np.unique(tot):
        idx = np.flatnonzero(tot == n)
        block = n_plus[np.ix_(idx, idx)]
        try:
            lam, vec = np.linalg.eigh(block)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigendecomposition of N+ failed: {exc}") from exc
        k = np.rint(lam)
        worst = max(worst, float(np.abs(lam - k).max()))
        sign = np.where(k % 2 == 0, 1.0, -1.0)
        out[np.ix_(idx, idx)] = (vec * sign) @ vec.conj().T
    if worst > 1e-6:
        log.warning(
            "N+ eigenvalues deviate from integers by up to %.3g (truncation edge, cutoffs %d/%d)",
            worst, cutoff_a, cutoff_b,
        )
    out = 0.5 * (out + out.conj().T)
    out.flags.writeable = False
    return out


def parity_plus(spec: HilbertSpec) -> Operator:
    """Parity (-1)^(c+^dag c+) of the symmetric collective mode."""
    if not spec.has_both_modes:
        raise InvalidArgumentError("both field modes are required")
    op = Operator(spec.field, _parity_matrix(spec.cutoff_a, spec.cutoff_b), hermitian=True)
    return embed(op, "field", spec) if spec.atom_levels else op


def interior_projector(spec: HilbertSpec, margin: int = 2) -> np.ndarray:
    """Projector onto field states with n_a + n_b <= min(cutoff) - margin."""
    keep = total_number(spec.field) <= min(spec.cutoff_a, spec.cutoff_b) - margin
    return np.diag(keep.astype(float))

"""Atom-beam injection protocol: level schemes, effective rates, beam schedule and the run loop.

All scheme parameters are dimensionless products with the nominal transit
time of the respective atom type, so each transit Hamiltonian is expressed in
units of 1/tau and a transit of nominal length evolves for unit time.  The
protocol clock runs in units of 1/r.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import integrate

from . import _kernels
from .dynamics import (
    Propagator,
    SectorSpectrum,
    damp_field,
    diagonalize,
    diagonalize_sectors,
    partial_trace_atom,
)
from .errors import InvalidArgumentError, NumericError, ValidationError
from .fock import (
    DensityMatrix,
    HilbertSpec,
    Operator,
    annihilation_op,
    atom_op,
    cat_state,
    collective_modes,
    embed,
)
from .observables import ObservableContext, TrajectoryRecord

log = logging.getLogger(__name__)

L1_LEVELS = ("1", "2", "3")
L2_LEVELS = {
    "bare": ("1p", "2p", "3p"),
    "h_prime": ("1p", "2p", "3p", "e"),
    "h_aux": ("1p", "2p", "3p", "1aux", "2aux"),
}
VARIANTS = tuple(L2_LEVELS)

# thresholds used to turn the "much smaller/larger than" conditions into checks
SMALL = 0.5
LARGE = 10.0


@dataclass(frozen=True)
class SchemeL1Params:
    g_a_tau1: float
    g_b_tau1: float
    r1: float = 1.0
    initial_atom_state: str = "minus"
    transit_time: float = 1e-3  # r * tau1

    @property
    def g_tau1(self) -> float:
        return math.hypot(self.g_a_tau1, self.g_b_tau1)

    @property
    def rate_per_event(self) -> float:
        """(g_a g_b / g)^2 tau1^2, the odd-mode damping weight per transit."""
        ga, gb = self.g_a_tau1, self.g_b_tau1
        return (ga * gb) ** 2 / (ga**2 + gb**2)

    def scaled(self, factor: float) -> SchemeL1Params:
        return replace(self, g_a_tau1=self.g_a_tau1 * factor, g_b_tau1=self.g_b_tau1 * factor)

    def violations(self, n_minus: float = 0.0) -> list[str]:
        out = []
        if self.g_a_tau1 <= 0 or self.g_b_tau1 <= 0:
            out.append("g_a tau1 > 0 and g_b tau1 > 0")
        if self.g_tau1 * math.sqrt(n_minus + 0.5) > SMALL:
            out.append(f"g tau1 sqrt(N- + 1/2) = {self.g_tau1 * math.sqrt(n_minus + 0.5):.3g} must be << 1 (<= {SMALL})")
        if self.r1 < 0:
            out.append("r1 >= 0")
        if self.r1 * self.transit_time > 0.1:
            out.append(f"r1 tau1 = {self.r1 * self.transit_time:.3g} must be << 1 (<= 0.1)")
        if self.initial_atom_state not in ("minus", "one"):
            out.append("initial_atom_state in {minus, one}")
        return out


@dataclass(frozen=True)
class SchemeL2Params:
    gb_tau2: float
    gb_over_delta: float
    ga_over_gb: float
    omega_tau2: float
    r2: float = 1.0
    variant: str = "h_prime"
    ga2_over_gb: float | None = None  # g_a'' / g_b', defaults to g_a'/g_b'
    deltap_over_delta: float = -1.0
    g_aux_over_gb: float | None = None  # defaults to g_a'/g_b'
    delta_aux_over_delta: float = -1.0
    phi: float = math.pi / 4
    transit_time: float = 1e-3  # r * tau2

    @classmethod
    def for_alpha(cls, alpha: float, **kw) -> SchemeL2Params:
        """Pick the drive so that alpha^2 = Omega Delta / (g_a' g_b')."""
        p = cls(omega_tau2=0.0, **kw)
        return replace(p, omega_tau2=alpha**2 * p.ga_tau2 * p.gb_tau2 / p.delta_tau2)

    @property
    def ga_tau2(self) -> float:
        return self.ga_over_gb * self.gb_tau2

    @property
    def delta_tau2(self) -> float:
        return self.gb_tau2 / self.gb_over_delta

    @property
    def ga2_tau2(self) -> float:
        r = self.ga_over_gb if self.ga2_over_gb is None else self.ga2_over_gb
        return r * self.gb_tau2

    @property
    def deltap_tau2(self) -> float:
        return self.deltap_over_delta * self.delta_tau2

    @property
    def g_aux_tau2(self) -> float:
        r = self.ga_over_gb if self.g_aux_over_gb is None else self.g_aux_over_gb
        return r * self.gb_tau2

    @property
    def delta_aux_tau2(self) -> float:
        return self.delta_aux_over_delta * self.delta_tau2

    @property
    def ga_over_delta(self) -> float:
        return self.ga_over_gb * self.gb_over_delta

    @property
    def active_fraction(self) -> float:
        """Probability the atom enters in |1'> (the two-photon branch)."""
        return math.cos(self.phi) ** 2 if self.variant == "h_aux" else 1.0

    def violations(self, mean_photons: float | None = None) -> list[str]:
        out = []
        if self.variant not in VARIANTS:
            return [f"variant in {VARIANTS}"]
        if self.gb_tau2 <= 0 or self.ga_over_gb <= 0:
            return ["g_b' tau2 > 0 and g_a'/g_b' > 0"]
        if self.gb_over_delta == 0:
            return ["g_b'/Delta != 0"]
        n = abs(alpha_from_drive(self)) ** 2 if mean_photons is None else mean_photons
        n = max(n, 1.0)
        d = abs(self.delta_tau2)
        if d < LARGE:
            out.append(f"|Delta| tau2 = {d:.3g} must be >> 1 (>= {LARGE})")
        for name, g in (("g_a'", self.ga_tau2), ("g_b'", self.gb_tau2)):
            v = g * g * n / d
            if v > SMALL:
                out.append(f"{name}^2 <n> tau2/|Delta| = {v:.3g} must be << 1 (<= {SMALL})")
        if self.omega_tau2 < 0:
            out.append("Omega tau2 >= 0")
        if self.omega_tau2 > SMALL:
            out.append(f"Omega tau2 = {self.omega_tau2:.3g} must be << 1 (<= {SMALL})")
        if self.omega_tau2 > 0 and d * self.omega_tau2 < LARGE:
            out.append(f"(|Delta| tau2)(Omega tau2) = {d * self.omega_tau2:.3g} must be >> 1 (>= {LARGE})")
        if self.r2 < 0:
            out.append("r2 >= 0")
        if self.r2 * self.transit_time > 0.1:
            out.append(f"r2 tau2 = {self.r2 * self.transit_time:.3g} must be << 1 (<= 0.1)")
        return out


def require_valid(params, **kw):
    v = params.violations(**kw)
    if v:
        raise ValidationError("; ".join(v))


def alpha_from_drive(params: SchemeL2Params) -> complex:
    """alpha with alpha^2 = Omega Delta / (g_a' g_b'); principal square root (Re alpha >= 0)."""
    if params.ga_tau2 <= 0 or params.gb_tau2 <= 0:
        raise InvalidArgumentError("g_a' and g_b' must be positive")
    a2 = params.omega_tau2 * params.delta_tau2 / (params.ga_tau2 * params.gb_tau2)
    return complex(np.sqrt(complex(a2)))


# ---------------------------------------------------------------- Hamiltonians


def _field_ops(spec):
    a = embed(annihilation_op(spec.cutoff_a), "a", spec)
    b = embed(annihilation_op(spec.cutoff_b), "b", spec)
    return a, b


def _sigma(spec, j, k):
    return embed(atom_op(spec.atom_levels, j, k), "atom", spec)


def _coupling(g, mode, spec, low, high):
    """g (mode^dag |low><high| + h.c.): emission when the atom decays high -> low."""
    x = mode.dag() @ _sigma(spec, low, high)
    return g * (x + x.dag())


def _require_levels(spec: HilbertSpec, levels):
    if not spec.has_both_modes:
        raise InvalidArgumentError("both field modes are required")
    if tuple(spec.atom_levels) != tuple(levels):
        raise InvalidArgumentError(f"atom levels {spec.atom_levels} do not match scheme levels {levels}")


def build_hamiltonian_L1(params: SchemeL1Params, spec: HilbertSpec) -> Operator:
    """g_a (a^dag s13 + h.c.) + g_b (b^dag s23 + h.c.) on resonance, units of 1/tau1."""
    _require_levels(spec, L1_LEVELS)
    a, b = _field_ops(spec)
    H = _coupling(params.g_a_tau1, a, spec, "1", "3") + _coupling(params.g_b_tau1, b, spec, "2", "3")
    return Operator(spec, H.matrix, hermitian=True)


def build_hamiltonian_L2(params: SchemeL2Params, spec: HilbertSpec) -> Operator:
    """Delta s2'2' + (g_a' a^dag s1'2' + g_b' b^dag s2'3' + Omega s1'3' + h.c.) plus the variant term."""
    if params.variant not in VARIANTS:
        raise InvalidArgumentError(f"unknown variant {params.variant!r}")
    _require_levels(spec, L2_LEVELS[params.variant])
    a, b = _field_ops(spec)
    H = params.delta_tau2 * _sigma(spec, "2p", "2p")
    H = H + _coupling(params.ga_tau2, a, spec, "1p", "2p")
    H = H + _coupling(params.gb_tau2, b, spec, "2p", "3p")
    s13 = _sigma(spec, "1p", "3p")
    H = H + params.omega_tau2 * (s13 + s13.dag())
    if params.variant == "h_prime":
        H = H + params.deltap_tau2 * _sigma(spec, "e", "e")
        H = H + _coupling(params.ga2_tau2, a, spec, "1p", "e")
    elif params.variant == "h_aux":
        H = H + params.delta_aux_tau2 * _sigma(spec, "2aux", "2aux")
        H = H + _coupling(params.g_aux_tau2, a, spec, "1aux", "2aux")
    return Operator(spec, H.matrix, hermitian=True)


@dataclass(frozen=True)
class CancellationReport:
    variant: str
    residual: float
    relative: float
    passed: bool


def cancellation_check(params: SchemeL2Params, rtol: float = 1e-12) -> CancellationReport:
    """Residual of the first-order Stark-shift cancellation for h' or h_aux."""
    if params.variant == "h_prime":
        t1 = params.ga_tau2**2 / params.delta_tau2
        t2 = params.ga2_tau2**2 / params.deltap_tau2
    elif params.variant == "h_aux":
        t1 = math.cos(params.phi) ** 2 * params.ga_tau2**2 / params.delta_tau2
        t2 = math.sin(params.phi) ** 2 * params.g_aux_tau2**2 / params.delta_aux_tau2
    else:
        raise InvalidArgumentError("cancellation check does not apply to the bare variant")
    # residual in units of 1/tau2
    residual = abs(t1 + t2)
    rel = residual / max(abs(t1), abs(t2))
    return CancellationReport(params.variant, residual, rel, rel <= rtol)


# ---------------------------------------------------------------- transit-time distribution


@dataclass(frozen=True)
class TauDistribution:
    """Distribution of L2 transit times; ``spread`` is the std of tau/tau2."""

    kind: str = "delta"
    spread: float = 0.0

    def __post_init__(self):
        if self.kind not in ("delta", "flat", "gaussian"):
            raise InvalidArgumentError(f"unknown tau distribution {self.kind!r}")
        if self.spread < 0:
            raise InvalidArgumentError("spread must be >= 0")

    def phase_averages(self, delta_tau2: float) -> tuple[float, float]:
        """(<sin(Delta tau)>, <sin^2(Delta tau/2)>) over p(tau)."""
        X = float(delta_tau2)
        if self.kind == "delta" or (self.kind == "gaussian" and self.spread == 0):
            return math.sin(X), math.sin(X / 2) ** 2
        if self.kind == "flat":
            # uniform over tau in [0, 2 pi/|Delta|], i.e. phase over one period
            lo, hi = (0.0, 2 * math.pi) if X >= 0 else (-2 * math.pi, 0.0)
            s1 = _quad(math.sin, lo, hi) / (2 * math.pi)
            s2 = _quad(lambda x: math.sin(x / 2) ** 2, lo, hi) / (2 * math.pi)
            return s1, s2
        eps = abs(X) * self.spread
        lo, hi = max(X - 12 * eps, 0.0) if X > 0 else X - 12 * eps, X + 12 * eps
        if X < 0:
            hi = min(hi, 0.0)

        def p(x):
            return math.exp(-0.5 * ((x - X) / eps) ** 2)

        norm = _quad(p, lo, hi)
        s1 = _quad(lambda x: p(x) * math.sin(x), lo, hi) / norm
        s2 = _quad(lambda x: p(x) * math.sin(x / 2) ** 2, lo, hi) / norm
        return s1, s2

    def sample(self, rng: np.random.Generator, n: int, delta_tau2: float) -> np.ndarray:
        """Transit durations in units of the nominal tau2."""
        if self.kind == "delta" or self.spread == 0 and self.kind == "gaussian":
            return np.ones(n)
        if self.kind == "flat":
            return rng.uniform(0.0, 2 * math.pi / abs(delta_tau2), n)
        out = 1.0 + self.spread * rng.standard_normal(n)
        bad = out <= 0
        while bad.any():
            out[bad] = 1.0 + self.spread * rng.standard_normal(int(bad.sum()))
            bad = out <= 0
        return out


def _quad(f, lo, hi):
    n_osc = max(50, int(abs(hi - lo) / math.pi) * 4)
    val, err, *rest = integrate.quad(f, lo, hi, limit=n_osc, epsabs=1e-14, epsrel=1e-12, full_output=1)
    if len(rest) > 1 and rest[0] is not None and "Warning" in str(rest[-1]) or err > 1e-8 * max(1.0, abs(val)):
        raise NumericError(f"quadrature did not converge (error estimate {err:.3g})")
    return val


def resonant_tau(delta_tau2: float) -> float:
    """Relative transit time closest to 1 with Delta tau an exact multiple of 2 pi."""
    n = max(1, round(abs(delta_tau2) / (2 * math.pi)))
    return 2 * math.pi * n / abs(delta_tau2)


class EffectiveRates(NamedTuple):
    gamma1: float
    gamma2: float
    f1: float
    f2: float


def effective_rates(l1: SchemeL1Params, l2: SchemeL2Params, dist: TauDistribution) -> EffectiveRates:
    """Coarse-grained rates in units of the injection rate.

    gamma2 and the one-photon terms carry the |1'> preparation probability
    (cos^2 phi for h_aux, 1 otherwise).
    """
    gamma1 = l1.r1 * l1.rate_per_event
    spread2 = dist.spread**2 if dist.kind == "gaussian" else 0.0
    w = l2.active_fraction
    gamma2 = w * (l2.r2 / 8) * (l2.ga_tau2 * l2.gb_over_delta) ** 2 * (1 + spread2)
    s1, s2 = dist.phase_averages(l2.delta_tau2)
    pref = w * l2.r2 * l2.ga_over_delta**2
    return EffectiveRates(gamma1, gamma2, pref * s1, pref * s2)


# ---------------------------------------------------------------- schemes


# conserved charge of each transit Hamiltonian: signs on (n_a, n_b) plus a weight per level
L1_CHARGE = ((1, 1), {"1": 0, "2": 0, "3": 1})
L2_CHARGE = ((1, -1), {"1p": 0, "2p": 1, "3p": 0, "e": 1, "1aux": 0, "2aux": 1})


def charge_vector(spec: HilbertSpec, signs, weights) -> np.ndarray:
    """Diagonal of sa*n_a + sb*n_b + sum_j w_j sigma_jj on the composite basis."""
    na, nb, m = spec.cutoff_a + 1, spec.cutoff_b + 1, spec.n_levels
    ia, ib, j = np.meshgrid(np.arange(na), np.arange(nb), np.arange(m), indexing="ij")
    w = np.array([weights[lv] for lv in spec.atom_levels])
    return (signs[0] * ia + signs[1] * ib + w[j]).reshape(-1)


@dataclass(eq=False)
class AtomScheme:
    """One atom type: composite space, transit Hamiltonian and preparation state."""

    name: str
    spec: HilbertSpec
    hamiltonian: Operator
    init: np.ndarray
    charge: np.ndarray
    use_numba: bool | None = None
    _spectrum: SectorSpectrum | None = field(default=None, repr=False)
    _channels: dict = field(default_factory=dict, repr=False)

    @property
    def spectrum(self) -> SectorSpectrum:
        if self._spectrum is None:
            self._spectrum = diagonalize_sectors(self.hamiltonian, self.charge)
        return self._spectrum

    @property
    def field_spec(self) -> HilbertSpec:
        return self.spec.field

    def kraus(self, tau: float = 1.0) -> np.ndarray:
        """Stack K_j = <j| exp(-i H tau) |init>, one per atomic level, assembled sector by sector."""
        df, m = self.spec.field.dim, self.spec.n_levels
        K = np.zeros((m, df, df), complex)
        for idx, Ub in self.spectrum.blocks(tau):
            f, lv = np.divmod(idx, m)
            w = self.init[lv]
            nz = np.flatnonzero(w)
            if nz.size == 0:
                continue
            cols = Ub[:, nz] * w[nz]
            for j in range(m):
                rows = np.flatnonzero(lv == j)
                if rows.size:
                    # several init levels can share a field index, so accumulate
                    np.add.at(K[j], (f[rows][:, None], f[nz][None, :]), cols[rows])
        return K

    def channel(self, tau: float = 1.0) -> _kernels.KrausChannel:
        key = float(tau)
        ch = self._channels.get(key)
        if ch is None:
            ch = _kernels.KrausChannel(self.kraus(tau), self.use_numba)
            if len(self._channels) > 64:
                self._channels.clear()
            self._channels[key] = ch
        return ch

    def propagator(self, tau: float = 1.0) -> Propagator:
        """Full composite propagator from a dense eigendecomposition (independent of the sector route)."""
        return Propagator(Operator(self.spec, diagonalize(self.hamiltonian).unitary(tau)), float(tau))


def l1_init_state(params: SchemeL1Params) -> np.ndarray:
    if params.initial_atom_state == "one":
        return np.array([1.0, 0.0, 0.0], complex)
    if params.initial_atom_state == "minus":
        g = params.g_tau1
        return np.array([params.g_b_tau1 / g, -params.g_a_tau1 / g, 0.0], complex)
    raise InvalidArgumentError(f"unknown initial atom state {params.initial_atom_state!r}")


def l2_init_state(params: SchemeL2Params) -> np.ndarray:
    levels = L2_LEVELS[params.variant]
    v = np.zeros(len(levels), complex)
    if params.variant == "h_aux":
        v[levels.index("1p")] = math.cos(params.phi)
        v[levels.index("1aux")] = math.sin(params.phi)
    else:
        v[levels.index("1p")] = 1.0
    return v


def scheme_L1(params: SchemeL1Params, field: HilbertSpec, use_numba=None) -> AtomScheme:
    spec = field.with_atom(L1_LEVELS)
    H = build_hamiltonian_L1(params, spec)
    return AtomScheme("L1", spec, H, l1_init_state(params), charge_vector(spec, *L1_CHARGE), use_numba)


def scheme_L2(params: SchemeL2Params, field: HilbertSpec, use_numba=None) -> AtomScheme:
    spec = field.with_atom(L2_LEVELS[params.variant])
    H = build_hamiltonian_L2(params, spec)
    return AtomScheme("L2", spec, H, l2_init_state(params), charge_vector(spec, *L2_CHARGE), use_numba)


def kraus_from_unitary(U: np.ndarray, spec: HilbertSpec, init: np.ndarray) -> np.ndarray:
    df, m = spec.field.dim, spec.n_levels
    U4 = U.reshape(df, m, df, m)
    return np.einsum("fjgk,k->jfg", U4, init)


def atom_event(rho_field: DensityMatrix, scheme: AtomScheme, propagator: Propagator) -> DensityMatrix:
    """rho' = Tr_atom[U (rho x |init><init|) U^dag], evaluated through Kraus operators."""
    if rho_field.space != scheme.field_spec or propagator.unitary.space != scheme.spec:
        raise InvalidArgumentError("space mismatch between field state, scheme and propagator")
    K = kraus_from_unitary(propagator.unitary.matrix, scheme.spec, scheme.init)
    out = _kernels.apply_kraus(rho_field.matrix, K, scheme.use_numba)
    out = 0.5 * (out + out.conj().T)
    _check_event_trace(np.trace(rho_field.matrix), np.trace(out))
    return DensityMatrix(rho_field.space, out)


def atom_event_reference(rho_field: DensityMatrix, scheme: AtomScheme, propagator: Propagator) -> DensityMatrix:
    """Same map built from the full composite density matrix and an explicit partial trace."""
    P = np.outer(scheme.init, scheme.init.conj())
    chi = np.kron(rho_field.matrix, P)
    U = propagator.unitary.matrix
    chi = U @ chi @ U.conj().T
    return DensityMatrix(rho_field.space, partial_trace_atom(chi, scheme.spec))


def _check_event_trace(before, after, tol=1e-12):
    # arguments are traces
    d = abs(after - before)
    if d > tol:
        raise NumericError(f"atom event changed the trace by {d:.3g}")


# ---------------------------------------------------------------- beam schedule


class Event(NamedTuple):
    time: float
    atom: str  # "L1" or "L2"
    duration: float  # transit time, units of 1/r
    tau_rel: float  # transit time in units of the nominal tau of that atom type


@dataclass(frozen=True)
class BeamSchedule:
    events: tuple
    horizon: float
    mode: str
    seed: int
    dropped: int = 0

    def count(self, atom: str) -> int:
        return sum(1 for e in self.events if e.atom == atom)


def _poisson_times(rng, rate, horizon):
    if rate <= 0:
        return np.empty(0)
    out = []
    t = 0.0
    chunk = max(16, int(rate * horizon * 1.2) + 16)
    while True:
        gaps = rng.exponential(1.0 / rate, chunk)
        ts = t + np.cumsum(gaps)
        out.append(ts[ts <= horizon])
        if ts[-1] > horizon:
            break
        t = ts[-1]
    return np.concatenate(out)


def make_schedule(
    r1: float,
    r2: float,
    horizon: float,
    mode: str = "poisson",
    seed: int = 0,
    dist: TauDistribution | None = None,
    transit_time1: float = 1e-3,
    transit_time2: float = 1e-3,
    delta_tau2: float = 1.0,
    snap_resonant: bool = False,
) -> BeamSchedule:
    """Ordered atom arrivals on [0, horizon]; overlapping transits are dropped."""
    if r1 < 0 or r2 < 0:
        raise InvalidArgumentError("rates must be >= 0")
    if not horizon > 0:
        raise InvalidArgumentError("horizon must be > 0")
    dist = dist or TauDistribution()
    ss = np.random.SeedSequence(int(seed))
    rng1, rng2, rng_tau = (np.random.default_rng(s) for s in ss.spawn(3))
    if mode == "poisson":
        t1 = _poisson_times(rng1, r1, horizon)
        t2 = _poisson_times(rng2, r2, horizon)
        times = np.concatenate([t1, t2])
        kinds = np.array(["L1"] * len(t1) + ["L2"] * len(t2))
        order = np.argsort(times, kind="stable")
        times, kinds = times[order], kinds[order]
    elif mode == "uniform":
        total = r1 + r2
        if total <= 0:
            times, kinds = np.empty(0), np.empty(0, dtype="<U2")
        else:
            n = int(math.floor(horizon * total + 1e-9))
            times = (np.arange(n) + 0.5) / total
            credit = np.zeros(2)
            share = np.array([r1, r2]) / total
            kinds = []
            for _ in range(n):
                credit += share
                k = int(np.argmax(credit))
                credit[k] -= 1.0
                kinds.append(("L1", "L2")[k])
            kinds = np.array(kinds)
    else:
        raise InvalidArgumentError(f"unknown schedule mode {mode!r}")

    n2 = int(np.sum(kinds == "L2"))
    base = resonant_tau(delta_tau2) if snap_resonant else 1.0
    tau2 = base * dist.sample(rng_tau, n2, delta_tau2)
    events = []
    dropped = 0
    busy_until = -np.inf
    j = 0
    for t, k in zip(times, kinds):
        if k == "L2":
            rel = float(tau2[j])
            j += 1
            dur = transit_time2 * rel
        else:
            rel = 1.0
            dur = transit_time1
        if t < busy_until:
            dropped += 1
            continue
        events.append(Event(float(t), str(k), float(dur), rel))
        busy_until = t + dur
    if dropped:
        log.info("schedule: dropped %d overlapping transits", dropped)
    return BeamSchedule(tuple(events), float(horizon), mode, int(seed), dropped)


# ---------------------------------------------------------------- protocol run


def run_protocol(cfg, use_numba=None) -> TrajectoryRecord:
    """Simulate the field under the scheduled atom beam plus cavity decay.

    ``cfg`` is a :class:`twomodecat.config.RunConfig`.  Between events the
    field decays exactly; during a transit decay is either neglected or split
    symmetrically around the unitary (``transit_decay = trotter``).
    """
    field_spec = cfg.field_spec()
    l1, l2, dist = cfg.l1_params(), cfg.l2_params(), cfg.tau_distribution_obj()
    alpha = cfg.target_alpha()
    s1 = scheme_L1(l1, field_spec, use_numba)
    s2 = scheme_L2(l2, field_spec, use_numba)
    schedule = make_schedule(
        l1.r1, l2.r2, cfg.horizon, cfg.schedule_mode, cfg.seed, dist,
        l1.transit_time, l2.transit_time, l2.delta_tau2, cfg.resonant_tau,
    )
    ctx = ObservableContext(field_spec, cat_state(alpha, field_spec))
    kappa = cfg.kappa_over_r
    trotter = cfg.transit_decay == "trotter"
    cm, _ = collective_modes(field_spec)
    n_minus_op = (cm.dag() @ cm).matrix
    l1_warned = False

    rec = TrajectoryRecord(meta={"dropped_events": schedule.dropped, "n_events": len(schedule.events)})
    rec.warnings += [f"regime: {w}" for w in cfg.validity_warnings()]
    rho = DensityMatrix.vacuum(field_spec).matrix.copy()
    if cfg.initial_state == "one_photon":
        rho[:] = 0
        rho[field_spec.cutoff_b + 1, field_spec.cutoff_b + 1] = 1.0

    def decay(r, dt):
        return damp_field(r, field_spec, kappa, dt, use_numba) if dt > 0 else r

    n_samples = int(math.floor(cfg.horizon / cfg.sample_interval + 1e-9)) + 1
    sample_times = cfg.sample_interval * np.arange(n_samples)
    events = schedule.events
    ie = 0
    t_cur = 0.0
    leak_warned = False
    for ts in sample_times:
        while ie < len(events) and events[ie].time <= ts:
            ev = events[ie]
            rho = decay(rho, ev.time - t_cur)
            scheme = s1 if ev.atom == "L1" else s2
            if trotter:
                rho = decay(rho, ev.duration / 2)
            before = np.trace(rho)
            rho = scheme.channel(ev.tau_rel).apply(rho)
            rho = 0.5 * (rho + rho.conj().T)
            _check_event_trace(before, np.trace(rho))
            if trotter:
                rho = decay(rho, ev.duration / 2)
            t_cur = ev.time + ev.duration
            ie += 1
            if cfg.positivity_every and ie % cfg.positivity_every == 0:
                lam = float(np.linalg.eigvalsh(rho).min())
                if lam < -1e-8:
                    rec.warnings.append(f"negative eigenvalue {lam:.3g} after event {ie}")
        if ts > t_cur:
            rho = decay(rho, ts - t_cur)
            t_cur = ts
        rec.append(ctx.sample(rho, ts, ie))
        leak = ctx.top_level_population(rho)
        if leak > 1e-4 and not leak_warned:
            rec.warnings.append(f"truncation-warning: top-level population {leak:.3g} at t={ts:g}")
            leak_warned = True
        n_minus = float(np.vdot(n_minus_op, rho).real)
        if not l1_warned and l1.g_tau1 * math.sqrt(max(n_minus, 0.0) + 0.5) > SMALL:
            rec.warnings.append(f"regime: g tau1 sqrt(N- + 1/2) > {SMALL} at t={ts:g} (N- = {n_minus:.3g})")
            l1_warned = True
    return rec

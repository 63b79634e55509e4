"""Independent verification routes: ideal Lindblad evolution, perturbative single-atom maps, dark subspace."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Generator, check_step, rk4_steps, steady_state_residual
from .errors import InvalidArgumentError, NumericError
from .fock import (
    DensityMatrix,
    HilbertSpec,
    StateVector,
    cat_state,
    collective_modes,
    jump_operators,
    mode_ops,
    parity_plus,
    product_coherent,
)
from .observables import ObservableContext, TrajectoryRecord
from .protocol import SchemeL1Params, SchemeL2Params, scheme_L1, scheme_L2

# ---------------------------------------------------------------- ideal dynamics


def ideal_generator(alpha, gamma1, gamma2, kappa, spec: HilbertSpec) -> Generator:
    c1, c2 = jump_operators(alpha, spec)
    return Generator(spec, channels=((gamma1, c1), (gamma2, c2)), decay_kappa=kappa)


def ideal_evolution(
    alpha,
    gamma1: float,
    gamma2: float,
    kappa: float,
    rho0: DensityMatrix,
    duration: float,
    sample_interval: float | None = None,
    dt: float | None = None,
    use_numba=None,
) -> TrajectoryRecord:
    """RK4 integration of gamma1 D[C1] + gamma2 D[C2] (+ kappa K), sampled like run_protocol."""
    spec = rho0.space
    if duration <= 0:
        raise InvalidArgumentError("duration must be > 0")
    gen = ideal_generator(alpha, gamma1, gamma2, kappa, spec)
    interval = duration / 100 if sample_interval is None else float(sample_interval)
    if interval <= 0:
        raise InvalidArgumentError("sample_interval must be > 0")
    dt = gen.stable_dt() if dt is None else float(dt)
    if not np.isfinite(dt):
        dt = interval
    # whole number of equal steps per sampling interval
    n_per = max(1, math.ceil(interval / dt - 1e-9))
    h = interval / n_per
    check_step(gen, h)
    kern = gen.kernel(use_numba)
    ctx = ObservableContext(spec, cat_state(alpha, spec))
    rec = TrajectoryRecord(meta={"dt": h, "gamma1": gamma1, "gamma2": gamma2, "kappa": kappa})
    rho = np.array(rho0.matrix)
    n_samples = int(math.floor(duration / interval + 1e-9))
    rec.append(ctx.sample(rho, 0.0, 0))
    for i in range(1, n_samples + 1):
        rho = rk4_steps(kern, rho, h, n_per)
        rec.append(ctx.sample(rho, i * interval, i * n_per))
    rest = duration - n_samples * interval
    if rest > 1e-9 * duration:
        n = max(1, math.ceil(rest / h))
        rho = rk4_steps(kern, rho, rest / n, n)
        rec.append(ctx.sample(rho, duration, n_samples * n_per + n))
    return rec


# ---------------------------------------------------------------- scheme 1 perturbative map


def _as_dm(state, spec) -> np.ndarray:
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    if isinstance(state, DensityMatrix):
        return np.array(state.matrix)
    raise InvalidArgumentError("test states must be StateVector or DensityMatrix")


def _dissipator(C, rho):
    CdC = C.conj().T @ C
    return 2.0 * C @ rho @ C.conj().T - CdC @ rho - rho @ CdC


def l1_predicted(params: SchemeL1Params, rho: np.ndarray, spec: HilbertSpec) -> np.ndarray:
    """rho + (g_a g_b / g)^2 tau1^2 D[c-] rho."""
    cm, _ = collective_modes(spec)
    return rho + params.rate_per_event * _dissipator(cm.matrix, rho)


@dataclass
class L1StateCheck:
    label: str
    max_diff: float
    max_diff_half: float
    exponent: float  # log2(max_diff / max_diff_half); nan when both vanish


@dataclass
class L1Report:
    g_tau1: float
    states: list = field(default_factory=list)

    def worst_exponent(self) -> float:
        e = [s.exponent for s in self.states if np.isfinite(s.exponent)]
        return min(e) if e else float("nan")


def perturbative_step_check_L1(params: SchemeL1Params, test_states: dict, spec: HilbertSpec) -> L1Report:
    """Exact traced single-transit map vs the second-order prediction, at g tau1 and g tau1 / 2."""
    if params.initial_atom_state != "minus":
        raise InvalidArgumentError("the perturbative map assumes atoms prepared in |->")
    spec = spec.field
    half = params.scaled(0.5)
    ch_full = scheme_L1(params, spec).channel(1.0)
    ch_half = scheme_L1(half, spec).channel(1.0)
    rep = L1Report(params.g_tau1)
    for label, st in test_states.items():
        rho = _as_dm(st, spec)
        d1 = float(np.abs(ch_full.apply(rho) - l1_predicted(params, rho, spec)).max())
        d2 = float(np.abs(ch_half.apply(rho) - l1_predicted(half, rho, spec)).max())
        # both near round-off: scaling is meaningless
        expo = math.log2(d1 / d2) if d1 > 1e-13 and d2 > 1e-13 else float("nan")
        rep.states.append(L1StateCheck(label, d1, d2, expo))
    return rep


# ---------------------------------------------------------------- scheme 2 perturbative map

L2_LINES = ("c2", "stark", "loss", "dephasing")


def l2_predicted_lines(params: SchemeL2Params, tau: float = 1.0) -> dict:
    """Per-transit coefficients of D[C2], i[n_a, .], D[a] and [n_a, [n_a, .]]."""
    ga, gb, d = params.ga_tau2, params.gb_tau2, params.delta_tau2
    c2 = params.active_fraction * (ga * gb * tau / d) ** 2 / 8

    def branch(g, delta):
        x = delta * tau
        stark = (g / delta) ** 2 * (x - math.sin(x))
        loss = 2 * (g / delta) ** 2 * math.sin(x / 2) ** 2
        theta = g * g * tau / delta
        return stark, loss, theta

    s1, l1, t1 = branch(ga, d)
    if params.variant == "bare":
        return {"c2": c2, "stark": s1, "loss": l1, "dephasing": -0.5 * t1**2}
    if params.variant == "h_prime":
        s2, l2, t2 = branch(params.ga2_tau2, params.deltap_tau2)
        return {"c2": c2, "stark": s1 + s2, "loss": l1 + l2, "dephasing": -0.5 * (t1 + t2) ** 2}
    c, s = math.cos(params.phi) ** 2, math.sin(params.phi) ** 2
    s2, l2, t2 = branch(params.g_aux_tau2, params.delta_aux_tau2)
    return {
        "c2": c2,
        "stark": c * s1 + s * s2,
        "loss": c * l1 + s * l2,
        "dephasing": -0.5 * (c * t1**2 + s * t2**2),
    }


@dataclass
class L2Report:
    variant: str
    tau: float
    fitted: dict
    predicted: dict
    residual: float  # Frobenius norm of what the fitted structures do not explain
    signal: float  # Frobenius norm of the full change rho' - rho
    condition: float
    nuisance: float | None = None  # coefficient of i[C2^dag C2, .] when fitted

    def relative_error(self, line: str) -> float:
        p = self.predicted[line]
        return abs(self.fitted[line] - p) / abs(p) if p else float("inf")


def _line_structures(alpha, spec, rho, nuisance=False):
    a, _ = mode_ops(spec)
    _, c2 = jump_operators(alpha, spec)
    n = a.dag() @ a
    N = n.matrix
    comm = N @ rho - rho @ N
    out = [
        _dissipator(c2.matrix, rho),
        1j * comm,
        _dissipator(a.matrix, rho),
        N @ comm - comm @ N,
    ]
    if nuisance:
        # two-photon light shift: same order as the D[C2] line, Hamiltonian in form
        M = c2.matrix.conj().T @ c2.matrix
        out.append(1j * (M @ rho - rho @ M))
    return out


def perturbative_step_check_L2(
    params: SchemeL2Params,
    test_states: dict,
    spec: HilbertSpec,
    tau: float = 1.0,
    max_condition: float = 1e10,
    nuisance: bool = True,
) -> L2Report:
    """Least-squares fit of the exact traced map onto the four predicted line structures.

    With ``nuisance`` an extra i[C2^dag C2, rho] column absorbs the coherent
    two-photon shift, which otherwise leaks into the fitted Stark line.
    """
    from .protocol import alpha_from_drive

    spec = spec.field
    alpha = alpha_from_drive(params)
    ch = scheme_L2(params, spec).channel(tau)
    cols, rhs = [], []
    for st in test_states.values():
        rho = _as_dm(st, spec)
        delta = ch.apply(rho) - rho
        S = _line_structures(alpha, spec, rho, nuisance)
        cols.append(np.stack([s.ravel() for s in S], axis=1))
        rhs.append(delta.ravel())
    A = np.concatenate(cols)
    b = np.concatenate(rhs)
    # real coefficients: split real and imaginary parts
    Ar = np.concatenate([A.real, A.imag])
    br = np.concatenate([b.real, b.imag])
    norms = np.linalg.norm(Ar, axis=0)
    if np.any(norms == 0):
        raise NumericError("a line structure vanishes on all test states; fit is degenerate")
    As = Ar / norms
    cond = float(np.linalg.cond(As))
    if not np.isfinite(cond) or cond > max_condition:
        raise NumericError(f"fit is degenerate (condition number {cond:.3g})")
    x, *_ = np.linalg.lstsq(As, br, rcond=None)
    x = x / norms
    resid = float(np.linalg.norm(Ar @ x - br))
    return L2Report(
        params.variant,
        float(tau),
        dict(zip(L2_LINES, map(float, x))),
        l2_predicted_lines(params, tau),
        resid,
        float(np.linalg.norm(br)),
        cond,
        float(x[4]) if nuisance else None,
    )


def l2_test_states(spec: HilbertSpec, n_max: int = 3, n_random: int = 4, seed: int = 0) -> dict:
    """Fock states and random pure states supported on n_a, n_b <= n_max."""
    spec = spec.field
    nb = spec.cutoff_b + 1
    out = {}
    rng = np.random.default_rng(seed)
    idx = [i * nb + j for i in range(n_max + 1) for j in range(n_max + 1)]
    for k in range(n_random):
        v = np.zeros(spec.dim, complex)
        v[idx] = rng.normal(size=len(idx)) + 1j * rng.normal(size=len(idx))
        out[f"random{k}"] = StateVector(spec, v / np.linalg.norm(v))
    return out


# ---------------------------------------------------------------- dark subspace


@dataclass
class DarkReport:
    alpha: complex
    residuals: dict  # state label -> (||C1 phi||, ||C2 phi||)
    parities: dict  # state label -> <Pi+>
    fixed_point_residual: float  # ||(L1 + L2) rho_inf|| with unit rates
    collapsed: bool  # alpha = 0: everything reduces to the vacuum
    tol: float

    @property
    def passed(self) -> bool:
        ok = all(max(r) < self.tol for r in self.residuals.values())
        ok &= abs(self.parities["even_cat"] - 1) < self.tol
        if "odd_cat" in self.parities:
            ok &= abs(self.parities["odd_cat"] + 1) < self.tol
        return ok and self.fixed_point_residual < 10 * self.tol

    def failures(self) -> list[str]:
        out = [f"||C phi|| for {k}" for k, r in self.residuals.items() if max(r) >= self.tol]
        if abs(self.parities["even_cat"] - 1) >= self.tol:
            out.append("even cat parity != +1")
        if "odd_cat" in self.parities and abs(self.parities["odd_cat"] + 1) >= self.tol:
            out.append("odd cat parity != -1")
        if self.fixed_point_residual >= 10 * self.tol:
            out.append("fixed point residual")
        return out


def dark_subspace_check(alpha, spec: HilbertSpec, tol: float = 1e-6) -> DarkReport:
    spec = spec.field
    c1, c2 = jump_operators(alpha, spec)
    Pi = parity_plus(spec).matrix
    states = {
        "plus_branch": product_coherent(alpha, spec),
        "minus_branch": product_coherent(-alpha, spec),
        "even_cat": cat_state(alpha, spec, +1),
    }
    collapsed = abs(alpha) == 0
    if not collapsed:
        states["odd_cat"] = cat_state(alpha, spec, -1)
    res, par = {}, {}
    for k, s in states.items():
        v = s.amplitudes
        res[k] = (float(np.linalg.norm(c1.matrix @ v)), float(np.linalg.norm(c2.matrix @ v)))
        if k.endswith("cat"):
            par[k] = float(np.vdot(v, Pi @ v).real)
    gen = Generator(spec, channels=((1.0, c1), (1.0, c2)))
    fp = steady_state_residual(gen, states["even_cat"].dm())
    return DarkReport(alpha, res, par, fp, collapsed, tol)

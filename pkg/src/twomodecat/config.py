"""Plain ``key = value`` run configuration."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .errors import ParseError, ValidationError
from .fock import field_spec
from .protocol import (
    VARIANTS,
    SchemeL1Params,
    SchemeL2Params,
    TauDistribution,
    alpha_from_drive,
    effective_rates,
)

REQUIRED = ("scheme_variant", "g_a_tau1", "g_b_tau1", "gb_tau2", "gb_over_delta", "ga_over_gb")
# at least one key of each group is required
ONE_OF = (("alpha", "omega_tau2"),)

DEFAULT_HORIZON = 1000.0


@dataclass(frozen=True)
class RunConfig:
    scheme_variant: str
    g_a_tau1: float
    g_b_tau1: float
    gb_tau2: float
    gb_over_delta: float
    ga_over_gb: float
    omega_tau2: float
    alpha: float | None = None
    cutoff_a: int = 16
    cutoff_b: int = 16
    phi: float = math.pi / 4
    ga2_over_gb: float | None = None
    deltap_over_delta: float = -1.0
    g_aux_over_gb: float | None = None
    delta_aux_over_delta: float = -1.0
    kappa_over_r: float = 0.0
    r1: float = 1.0
    r2: float = 1.0
    transit_time: float = 1e-3
    schedule_mode: str = "poisson"
    tau_distribution: str = "delta"
    delta_tau: float = 0.0
    resonant_tau: bool = False
    horizon: float = DEFAULT_HORIZON
    n_events: int | None = None
    sample_interval: float = 1.0
    seed: int = 0
    initial_atom_state: str = "minus"
    initial_state: str = "vacuum"
    transit_decay: str = "neglect"
    positivity_every: int = 100
    ideal_dt: float | None = None
    validity: str = "strict"  # "warn" downgrades scheme-regime violations to trajectory warnings

    def __post_init__(self):
        validate(self)

    # -- derived objects

    def field_spec(self):
        return field_spec(self.cutoff_a, self.cutoff_b)

    def l1_params(self) -> SchemeL1Params:
        return SchemeL1Params(self.g_a_tau1, self.g_b_tau1, self.r1, self.initial_atom_state, self.transit_time)

    def l2_params(self) -> SchemeL2Params:
        return SchemeL2Params(
            gb_tau2=self.gb_tau2,
            gb_over_delta=self.gb_over_delta,
            ga_over_gb=self.ga_over_gb,
            omega_tau2=self.omega_tau2,
            r2=self.r2,
            variant=self.scheme_variant,
            ga2_over_gb=self.ga2_over_gb,
            deltap_over_delta=self.deltap_over_delta,
            g_aux_over_gb=self.g_aux_over_gb,
            delta_aux_over_delta=self.delta_aux_over_delta,
            phi=self.phi,
            transit_time=self.transit_time,
        )

    def tau_distribution_obj(self) -> TauDistribution:
        return TauDistribution(self.tau_distribution, self.delta_tau)

    def target_alpha(self) -> float:
        return alpha_from_drive(self.l2_params()).real

    def rates(self):
        return effective_rates(self.l1_params(), self.l2_params(), self.tau_distribution_obj())

    def with_overrides(self, **kw) -> RunConfig:
        """Copy with some keys replaced; alpha/omega and horizon/n_events are re-resolved."""
        data = {k: v for k, v in asdict(self).items()}
        if "omega_tau2" in kw and "alpha" not in kw:
            data["alpha"] = None
        if "alpha" in kw and kw["alpha"] is not None and "omega_tau2" not in kw:
            data["omega_tau2"] = None
        if "horizon" in kw and "n_events" not in kw:
            data["n_events"] = None
        data.update(kw)
        return from_mapping(data)

    def validity_warnings(self) -> list[str]:
        """Scheme-regime inequalities that do not hold (empty when all are satisfied)."""
        return _regime_violations(self)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def _omega_for_alpha(alpha, gb_tau2, gb_over_delta, ga_over_gb):
    p = SchemeL2Params.for_alpha(alpha, gb_tau2=gb_tau2, gb_over_delta=gb_over_delta, ga_over_gb=ga_over_gb)
    return p.omega_tau2


def validate(cfg: RunConfig) -> None:
    errs = []
    if cfg.scheme_variant not in VARIANTS:
        errs.append(f"scheme_variant in {VARIANTS}")
    if cfg.cutoff_a < 1 or cfg.cutoff_b < 1:
        errs.append("cutoff_a >= 1 and cutoff_b >= 1")
    if cfg.kappa_over_r < 0:
        errs.append("kappa_over_r >= 0")
    if not cfg.sample_interval > 0:
        errs.append("sample_interval > 0")
    if not cfg.horizon > 0:
        errs.append("horizon > 0")
    if cfg.delta_tau < 0:
        errs.append("delta_tau >= 0")
    if cfg.transit_time <= 0:
        errs.append("transit_time > 0")
    if cfg.schedule_mode not in ("poisson", "uniform"):
        errs.append("schedule_mode in {poisson, uniform}")
    if cfg.tau_distribution not in ("delta", "flat", "gaussian"):
        errs.append("tau_distribution in {delta, flat, gaussian}")
    if cfg.transit_decay not in ("neglect", "trotter"):
        errs.append("transit_decay in {neglect, trotter}")
    if cfg.initial_state not in ("vacuum", "one_photon"):
        errs.append("initial_state in {vacuum, one_photon}")
    if cfg.positivity_every < 0:
        errs.append("positivity_every >= 0")
    if cfg.ideal_dt is not None and not cfg.ideal_dt > 0:
        errs.append("ideal_dt > 0")
    if cfg.validity not in ("strict", "warn"):
        errs.append("validity in {strict, warn}")
    if errs:
        raise ValidationError("; ".join(errs))
    a = cfg.target_alpha()
    if a * a > min(cfg.cutoff_a, cfg.cutoff_b) / 4:
        errs.append(f"|alpha|^2 = {a * a:.3g} <= min(cutoff)/4")
    if cfg.alpha is not None and not math.isclose(abs(cfg.alpha), a, rel_tol=1e-9, abs_tol=1e-12):
        errs.append(f"alpha = {cfg.alpha} must match Omega Delta/(g_a' g_b') (gives {a:.6g})")
    if cfg.validity == "strict":
        errs += _regime_violations(cfg)
    if errs:
        raise ValidationError("; ".join(errs))


def _regime_violations(cfg) -> list[str]:
    a = cfg.target_alpha()
    out = cfg.l1_params().violations(n_minus=a * a)
    out += cfg.l2_params().violations()
    if (cfg.r1 + cfg.r2) * cfg.transit_time > 0.1:
        out.append(f"(r1 + r2) tau = {(cfg.r1 + cfg.r2) * cfg.transit_time:.3g} must be << 1 (<= 0.1)")
    return out


# ---------------------------------------------------------------- parsing

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, raw):
    t = _FIELD_TYPES[key]
    try:
        if raw.lower() in ("none", "") and "None" in t:
            return None
        if t.startswith("int"):
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if t.startswith("float"):
            return float(raw)
        if t == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError
    except ValueError:
        raise ParseError(f"{key}: cannot parse {raw!r} as {t}") from None
    return raw


def parse_pairs(text: str) -> dict:
    """Raw ``key -> value string`` mapping; rejects unknown and duplicate keys."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ParseError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def from_mapping(data: dict) -> RunConfig:
    """Build a config from already-typed values; resolves alpha/omega and n_events/horizon."""
    data = {k: v for k, v in data.items() if v is not None}
    missing = [k for k in REQUIRED if k not in data]
    missing += ["|".join(g) for g in ONE_OF if not any(k in data for k in g)]
    if missing:
        raise ParseError("missing required keys: " + ", ".join(missing))
    if "omega_tau2" not in data:
        data["omega_tau2"] = _omega_for_alpha(data["alpha"], data["gb_tau2"], data["gb_over_delta"], data["ga_over_gb"])
    if "n_events" in data:
        total = data.get("r1", 1.0) + data.get("r2", 1.0)
        if data["n_events"] < 1 or total <= 0:
            raise ValidationError("n_events >= 1 and r1 + r2 > 0")
        horizon = data["n_events"] / total
        if "horizon" in data and not math.isclose(horizon, data["horizon"]):
            raise ValidationError("horizon and n_events disagree: horizon = n_events/(r1 + r2)")
        data["horizon"] = horizon
    return RunConfig(**data)


def parse_config(text: str) -> RunConfig:
    raw = parse_pairs(text)
    return from_mapping({k: _convert(k, v) for k, v in raw.items()})


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: RunConfig) -> list[str]:
    """Resolved config as ``key = value`` lines (round-trips through parse_config)."""
    out = []
    for k, v in cfg.items():
        if v is None:
            continue
        if isinstance(v, float):
            v = repr(v)
        out.append(f"{k} = {v}")
    return out


# default run: h_prime scheme, alpha = 1, no cavity loss
DEFAULT_CONFIG_TEXT = """\
scheme_variant = h_prime
g_a_tau1 = 0.1
g_b_tau1 = 0.1
gb_tau2 = 100
gb_over_delta = 1e-3
ga_over_gb = 1
omega_tau2 = 0.1
kappa_over_r = 0
"""

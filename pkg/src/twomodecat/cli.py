"""Command line entry point: simulate, ideal, check, sweep."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import _FIELD_TYPES, DEFAULT_CONFIG_TEXT, _convert, format_config, load_config, parse_config
from .errors import TwoModeCatError
from .fock import DensityMatrix, collective_modes, fock_state, interior_projector, jump_operators, parity_plus
from .observables import COLUMNS
from .oracle import dark_subspace_check, ideal_evolution, perturbative_step_check_L1
from .protocol import TauDistribution, cancellation_check, effective_rates, run_protocol

log = logging.getLogger("twomodecat")

SUMMARY_COLUMNS = ("peak_fidelity", "time_of_peak", "final_fidelity")


# ---------------------------------------------------------------- output


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.12g" % x


def render_csv(rec, cfg, command: str) -> str:
    lines = [f"# twomodecat {__version__}", f"# command = {command}"]
    lines += ["# " + s for s in format_config(cfg)]
    lines += [f"# warning: {w}" for w in rec.warnings]
    lines.append(",".join(COLUMNS))
    for s in rec.samples:
        lines.append(",".join(_fmt(getattr(s, c)) for c in COLUMNS))
    return "\n".join(lines) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write to a temp file in the target directory, then rename over the target."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- commands


def _initial_dm(cfg):
    spec = cfg.field_spec()
    if cfg.initial_state == "one_photon":
        return fock_state(spec, 0, 1).dm()
    return DensityMatrix.vacuum(spec)


def run_ideal(cfg):
    rates = cfg.rates()
    return ideal_evolution(
        cfg.target_alpha(), rates.gamma1, rates.gamma2, cfg.kappa_over_r, _initial_dm(cfg),
        cfg.horizon, cfg.sample_interval, cfg.ideal_dt,
    )


def _load(args):
    cfg = load_config(args.config) if args.config else parse_config(DEFAULT_CONFIG_TEXT)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def command_simulate(args) -> int:
    cfg = _load(args)
    rec = run_protocol(cfg)
    _emit(args, render_csv(rec, cfg, "simulate"))
    for w in rec.warnings:
        log.warning(w)
    return 0


def command_ideal(args) -> int:
    cfg = _load(args)
    rec = run_ideal(cfg)
    _emit(args, render_csv(rec, cfg, "ideal"))
    return 0


def _emit(args, text):
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def run_checks(cfg) -> list[tuple[str, bool, str]]:
    """Invariant suite: (name, passed, detail) per check."""
    out = []
    spec = cfg.field_spec()
    alpha = cfg.target_alpha()
    dark = dark_subspace_check(alpha, spec)
    for k, (r1, r2) in dark.residuals.items():
        out.append((f"dark_{k}", max(r1, r2) < dark.tol, f"|C1 phi| = {r1:.3g}, |C2 phi| = {r2:.3g}"))
    for k, p in dark.parities.items():
        want = 1.0 if k == "even_cat" else -1.0
        out.append((f"parity_{k}", abs(p - want) < dark.tol, f"<Pi+> = {p:.12g}"))
    out.append(("fixed_point", dark.fixed_point_residual < 1e-5, f"|L rho_inf| = {dark.fixed_point_residual:.3g}"))

    # parity commutes with both jump operators away from the truncation edge
    Pi = parity_plus(spec).matrix
    P = interior_projector(spec, margin=2)
    for name, C in zip(("C1", "C2"), jump_operators(alpha, spec)):
        c = np.linalg.norm(P @ (Pi @ C.matrix - C.matrix @ Pi) @ P, 2)
        out.append((f"parity_commutes_{name}", c < 1e-8, f"|P[Pi+, {name}]P| = {c:.3g}"))

    l2 = cfg.l2_params()
    if l2.variant != "bare":
        rep = cancellation_check(l2)
        out.append(("stark_cancellation", rep.passed, f"relative residual {rep.relative:.3g}"))

    if cfg.initial_atom_state == "minus":
        cm, _ = collective_modes(spec)
        one = fock_state(spec, 0, 0)
        v = cm.dag().matrix @ one.amplitudes
        states = {"vacuum": one, "odd_photon": type(one)(spec, v / np.linalg.norm(v))}
        rep1 = perturbative_step_check_L1(cfg.l1_params(), states, spec)
        e = rep1.states[1].exponent
        out.append(("l1_map_scaling", abs(e - 4) <= 1, f"exponent {e:.3f}"))
        out.append(("l1_map_vacuum", rep1.states[0].max_diff < 1e-12, f"max diff {rep1.states[0].max_diff:.3g}"))

    delta_tau2 = 2 * np.pi * 1000
    r = effective_rates(cfg.l1_params(), l2, TauDistribution("delta"))
    rd = effective_rates(cfg.l1_params(), _with_delta(l2, delta_tau2), TauDistribution("delta"))
    out.append(("f_delta_resonant", abs(rd.f1) < 1e-12 and abs(rd.f2) < 1e-12, f"f1 = {rd.f1:.3g}, f2 = {rd.f2:.3g}"))
    out.append(("rates_positive", r.gamma1 > 0 and r.gamma2 > 0, f"gamma1 = {r.gamma1:.6g}, gamma2 = {r.gamma2:.6g}"))
    return out


def _with_delta(l2, delta_tau2):
    from dataclasses import replace

    return replace(l2, gb_over_delta=l2.gb_tau2 / delta_tau2)


def command_check(args) -> int:
    cfg = _load(args)
    results = run_checks(cfg)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    failed = [n for n, ok, _ in results if not ok]
    if failed:
        print("failed invariants: " + ", ".join(failed))
        return 1
    return 0


def parse_sweep(tokens) -> tuple[str, list]:
    """``key=v1,v2`` (spaces around '=' allowed) -> (key, typed values)."""
    text = "".join(tokens)
    if "=" not in text:
        raise TwoModeCatError(f"sweep expects key=v1,v2,..., got {text!r}")
    key, vals = text.split("=", 1)
    key = key.strip()
    if key not in _FIELD_TYPES:
        raise TwoModeCatError(f"unknown key {key!r}")
    raw = [v for v in vals.split(",") if v.strip()]
    if not raw:
        raise TwoModeCatError("sweep needs at least one value")
    return key, [_convert(key, v.strip()) for v in raw]


def _sweep_point(cfg, key, value, mode):
    c = cfg.with_overrides(**{key: value})
    rec = run_protocol(c) if mode == "simulate" else run_ideal(c)
    f = rec.fidelity
    peak, t_peak = rec.peak()
    return c, rec, (peak, t_peak, float(f[-1]))


def command_sweep(args) -> int:
    cfg = _load(args)
    key, values = parse_sweep(args.assignment)
    values = sorted(values)
    out_dir = args.out or "."
    jobs = [(cfg, key, v, args.mode) for v in values]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            results = list(ex.map(_sweep_point, *zip(*jobs)))
    else:
        results = [_sweep_point(*j) for j in jobs]
    rows = [f"# twomodecat {__version__}", f"# command = sweep {key} ({args.mode})"]
    rows += ["# " + s for s in format_config(cfg)]
    rows.append(",".join((key,) + SUMMARY_COLUMNS))
    for v, (c, rec, summ) in zip(values, results):
        write_atomic(os.path.join(out_dir, f"{key}_{v}.csv"), render_csv(rec, c, args.mode))
        rows.append(",".join([_fmt(v) if not isinstance(v, str) else v] + [_fmt(x) for x in summ]))
    write_atomic(os.path.join(out_dir, "summary.csv"), "\n".join(rows) + "\n")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twomodecat", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="key = value config file (built-in defaults if omitted)")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("simulate", help="event-based atom-beam protocol")
    common(sp, "CSV output path (stdout if omitted)")
    sp.set_defaults(func=command_simulate)
    sp = sub.add_parser("ideal", help="ideal coarse-grained master equation with matched rates")
    common(sp, "CSV output path (stdout if omitted)")
    sp.set_defaults(func=command_ideal)
    sp = sub.add_parser("check", help="run the invariant suite and print pass/fail")
    common(sp, "unused")
    sp.set_defaults(func=command_check)
    sp = sub.add_parser("sweep", help="vary one key: sweep key=v1,v2,...")
    sp.add_argument("assignment", nargs="+", help="key=v1,v2,...")
    sp.add_argument("--mode", choices=("simulate", "ideal"), default="simulate")
    common(sp, "output directory")
    sp.set_defaults(func=command_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (TwoModeCatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

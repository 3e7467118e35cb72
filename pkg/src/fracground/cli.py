"""Command line entry point: ``fracground <command> --config FILE [--out DIR]``.

Exit codes: 0 all gates passed, 1 a gate failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .constants import Params, blowup_constants, ConstantsReport
from .diagnostics import kernel_spectrum_check, sup_norm_floor
from .config import ConfigError, RunConfig, load_config
from .field import write_field
from .sweep import (
    FitError, SweepConfig, concentration_check, csv_header, fit_blowup_limit, fit_sobolev_limit, make_record,
    record_row, run_sweep, uniqueness_test,
)
from .solver import solve_ground_state

EXIT_OK, EXIT_GATE, EXIT_USAGE = 0, 1, 2
DEFAULT_PAIRS = ((1, 0.2), (2, 0.3), (3, 0.4), (3, 0.5))
POHOZAEV_GATE = 1e-2
TAIL_GATE = 1e-3


def _out(args, cfg: Optional[RunConfig]) -> Optional[Path]:
    d = args.out or (cfg.out_dir if cfg else None)
    if d:
        Path(d).mkdir(parents=True, exist_ok=True)
        return Path(d)
    return None


def _gate_lines(gates: list[tuple[str, bool]]) -> str:
    return "".join(f"gate {name}: {'PASS' if ok else 'FAIL'}\n" for name, ok in gates)


def cmd_constants(args, cfg: Optional[RunConfig]) -> int:
    pairs = [(cfg.params.N, cfg.params.s)] if cfg else DEFAULT_PAIRS
    lines = [",".join(ConstantsReport.CSV_COLUMNS)]
    for N, s in pairs:
        lines.append(blowup_constants(Params(N, s)).csv_row())
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    out = _out(args, cfg)
    if out:
        (out / "constants.csv").write_text(text)
    return EXIT_OK


def cmd_solve(args, cfg: RunConfig) -> int:
    p, V = cfg.params, cfg.potential
    eps = cfg.eps[0]
    gs = solve_ground_state(p, V, cfg.grid, eps, cfg.solver)
    rec = make_record(gs, _single(cfg, (eps,)))
    row = ",".join(csv_header(p.N)) + "\n" + ",".join(record_row(rec)) + "\n"
    gates = [
        ("converged", rec.converged),
        ("resolved", rec.resolved),
        ("pohozaev", rec.pohozaev_rel < POHOZAEV_GATE),
        ("tail_mass", rec.tail_mass < TAIL_GATE),
        ("sup_floor", gs.u_max >= sup_norm_floor(V, p) * (1 - 1e-3)),
    ]
    sys.stdout.write(row + _gate_lines(gates))
    out = _out(args, cfg)
    if out:
        (out / "ground_state.csv").write_text(row)
        write_field(out / "ground_state.bin", gs.u, p.s, {"eps": repr(eps), "s_v": repr(gs.s_v)})
    return EXIT_OK if all(ok for _, ok in gates) else EXIT_GATE


def sweep_gates(cfg: RunConfig, records) -> tuple[list[tuple[str, bool]], list[str]]:
    p, V = cfg.params, cfg.potential
    acc = [r for r in records if r.accepted]
    notes = []
    gates = [("records", len(acc) >= 3)]
    gates.append(("pohozaev", all(r.pohozaev_rel < POHOZAEV_GATE for r in acc)))
    gates.append(("tail_mass", all(r.tail_mass < TAIL_GATE for r in acc)))
    sv = [r.s_v for r in acc]
    gates.append(("s_v_decreasing", all(b < a for a, b in zip(sv, sv[1:]))))
    um = [r.u_max for r in acc]
    gates.append(("u_max_increasing", all(b > a for a, b in zip(um, um[1:]))))
    comp = [r.comp_ratio for r in acc]
    mos = [r.moser_ratio for r in acc]
    if acc:
        gates.append(("comp_ratio_bounded", max(comp) / min(comp) < 10))
        gates.append(("moser_ratio_bounded", max(mos) / min(mos) < 3))
        gates.append(("mu_pow_eps", abs(acc[-1].mu_pow_eps - 1) < 0.2))
    consts = blowup_constants(p) if p.regime4s else None
    x0 = V.argmin(p.N)
    if consts is not None and (V.is_constant or x0 is not None):
        target = consts.blowup_L * (V.v0 if x0 is not None else V.a)
        try:
            fit = fit_blowup_limit(records, p.s)
            rel = abs(fit.limit - target) / target
            notes.append(f"blowup limit {fit.limit:.6g} +- {fit.ci:.3g} vs target {target:.6g} (rel {rel:.3e})")
            gates.append(("blowup_limit", rel < 0.10))
            sfit = fit_sobolev_limit(records, p.s)
            notes.append(f"s_v limit {sfit.limit:.6g} +- {sfit.ci:.3g} (S = {consts.sobolev_S:.6g})")
        except FitError as exc:
            notes.append(f"fit skipped: {exc}")
            gates.append(("blowup_limit", False))
    conc = concentration_check(records, V, cfg.grid)
    if conc.applicable:
        notes.append(f"final |x_max - x0| = {conc.final_distance:.3e} (2h = {2 * cfg.grid.h:.3e})")
        gates.append(("concentration", conc.ok))
    return gates, notes


def cmd_sweep(args, cfg: RunConfig) -> int:
    out = _out(args, cfg)
    records = run_sweep(cfg.sweep(str(out) if out else None), resume=not args.fresh)
    gates, notes = sweep_gates(cfg, records)
    text = "".join(n + "\n" for n in notes) + _gate_lines(gates)
    sys.stdout.write(text)
    if out:
        (out / "report.txt").write_text(text)
    return EXIT_OK if gates and all(ok for _, ok in gates) else EXIT_GATE


def cmd_kernel_check(args, cfg: RunConfig) -> int:
    rep = kernel_spectrum_check(cfg.params, cfg.grid, seed=cfg.seed)
    text = rep.csv()
    sys.stdout.write(text)
    out = _out(args, cfg)
    if out:
        (out / "kernel.csv").write_text(text)
    return EXIT_OK if rep.ok else EXIT_GATE


def cmd_uniqueness(args, cfg: RunConfig) -> int:
    rep = uniqueness_test(_single(cfg, cfg.eps), cfg.n_starts, eps=cfg.eps[-1])
    ok = rep.n_converged == rep.n_starts and rep.max_distance < 1e-4
    text = (
        f"n_starts={rep.n_starts}\nn_converged={rep.n_converged}\nmax_distance={rep.max_distance:.6g}\n"
        f"asymmetry={rep.asymmetry:.6g}\ns_values={';'.join(f'{v:.17g}' for v in rep.s_values)}\n"
        + "".join(f"failure={f}\n" for f in rep.failures)
        + _gate_lines([("uniqueness", ok)])
    )
    sys.stdout.write(text)
    out = _out(args, cfg)
    if out:
        (out / "uniqueness.txt").write_text(text)
    return EXIT_OK if ok else EXIT_GATE


def _single(cfg: RunConfig, eps: Sequence[float]) -> SweepConfig:
    """Sweep-shaped config around a short eps list (record helpers need one)."""
    return SweepConfig(cfg.params, cfg.grid, cfg.potential, tuple(eps), cfg.solver, None, cfg.seed,
                       cfg.moser_radii, cfg.resolution_factor, min_points=1)


COMMANDS = {
    "constants": cmd_constants,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "kernel-check": cmd_kernel_check,
    "uniqueness": cmd_uniqueness,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracground", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value run file")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--fresh", action="store_true", help="sweep: ignore an existing partial run")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = None
    if args.config:
        try:
            cfg = load_config(args.config)
        except (OSError, ConfigError) as exc:
            print(f"fracground: {exc}", file=sys.stderr)
            return EXIT_USAGE
    elif args.command != "constants":
        print(f"fracground: {args.command} needs --config", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except ValueError as exc:
        print(f"fracground: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""``icsim`` command line: simulate, sweep-failures, expected-delay, verify."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, config
from . import channel as ch
from .sim import Scenario, ScenarioError, burst_delay_scenario, resolve_tau_th, resolve_x0, run


# ------------------------------------------------------------ CSV producers
def _flatten(prefix, value, out):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out[prefix] = "null" if value is None else value
    return out


def trace_header(scn: Scenario) -> dict:
    """Every scenario field (defaults included) plus the values resolved at run time."""
    header = _flatten("", config.to_dict(scn), {})
    for car in scn.cars:
        header[f"car_{car.uid}_x0_resolved"] = repr(resolve_x0(scn, car))
    header["tau_th_resolved"] = repr(resolve_tau_th(scn))
    model = scn.loss.pdr_model()
    if model is not None:
        header["lambda_per_m"] = repr(model.lam)
    return header


def simulate_outputs(scn: Scenario):
    """Run ``scn`` and return ``(trace_csv, summary_dict, verdict)``."""
    trace, verdict = run(scn)
    summary = {k: v for k, v in verdict.as_dict().items()}
    summary["priority"] = {str(k): v for k, v in verdict.priority.items()}
    for key in ("first_enter_slot", "mainctrl_slot", "crossed_slot", "safe_slots"):
        summary[key] = {str(k): v for k, v in summary[key].items()}
    summary["overlaps"] = [list(o) for o in verdict.overlaps]
    return trace.to_csv(trace_header(scn)), summary, verdict


def _grid_cell(cell):
    f1, f2 = cell
    _, verdict = run(burst_delay_scenario(f1, f2))
    return verdict.t_en_observed


def sweep_failures_rows(max_f: int, formula=analysis.t_en_closed_form, workers: int = 4) -> list:
    """``(f1, f2, t_en_sim, t_en_formula, match)`` for every cell of the failure grid."""
    if max_f < 0:
        raise ValueError("max_f must be >= 0")
    cells = [(f1, f2) for f1 in range(max_f + 1) for f2 in range(max_f + 1)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        sims = list(pool.map(_grid_cell, cells))
    rows = []
    for (f1, f2), t_sim in zip(cells, sims):
        t_formula = formula(f1, f2)
        rows.append((f1, f2, t_sim, t_formula, t_sim == t_formula))
    return rows


def sweep_failures_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["f1", "f2", "t_en_sim", "t_en_formula", "match"])
    for f1, f2, ts, tf, ok in rows:
        w.writerow([f1, f2, ts, tf, "true" if ok else "false"])
    return buf.getvalue()


def expected_delay_csv(spec: analysis.DelaySweepSpec) -> str:
    text = analysis.sweep_csv(spec, analysis.delay_sweep(spec))
    presets = f"# lambda_open_field: {ch.LAMBDA_OPEN_FIELD}\n# lambda_harsh: {ch.LAMBDA_HARSH}\n"
    return presets + text


def distance_grid(dmin: float, dmax: float, dstep: float) -> list:
    if dstep <= 0 or dmax < dmin:
        raise ValueError("need dstep > 0 and dmax >= dmin")
    n = int(np.floor((dmax - dmin) / dstep + 1e-9))
    return [float(dmin + i * dstep) for i in range(n + 1)]


# ---------------------------------------------------------------- commands
def _write(out_dir, name, text):
    if out_dir is None:
        sys.stdout.write(text)
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)
    print(f"wrote {path / name}")


def _load_config(arg: str) -> Scenario:
    path = Path(arg)
    if not path.exists() and arg in config.BUNDLED:
        path = config.bundled_path(arg)
    return config.load(path)


def cmd_simulate(args) -> int:
    try:
        scn = _load_config(args.config)
        if args.seed is not None:
            scn.seed = args.seed
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    trace_csv, summary, verdict = simulate_outputs(scn)
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(trace_csv)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"t_EN={verdict.t_en_observed} safe={verdict.safe} both_crossed={verdict.both_crossed} "
          f"crossing_slots={verdict.total_crossing_slots} min_separation={verdict.min_separation:.3f}")
    print(f"wrote {out / 'trace.csv'} and {out / 'summary.json'}")
    return 0 if verdict.safe and verdict.both_crossed else 1


def cmd_sweep_failures(args) -> int:
    try:
        rows = sweep_failures_rows(args.max_f)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write(args.out, "sweep_failures.csv", sweep_failures_csv(rows))
    bad = [r for r in rows if not r[4]]
    print(f"{len(rows) - len(bad)}/{len(rows)} cells match the closed form", file=sys.stderr)
    return 0 if not bad else 1


def cmd_expected_delay(args) -> int:
    try:
        xis = [float(x) for x in args.xi.split(",")] if args.xi else list(analysis.XI_FAMILY)
        spec = analysis.DelaySweepSpec(
            env=ch.Environment(args.env), distances=distance_grid(args.dmin, args.dmax, args.dstep), xis=xis
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write(args.out, "expected_delay.csv", expected_delay_csv(spec))
    return 0


def cmd_verify(args) -> int:
    from . import verify

    results = verify.run_all(only=args.only)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icsim", description="Two-car intersection crossing over a lossy V2V channel.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario file")
    s.add_argument("--config", required=True, help="scenario file, or a bundled name such as burst3")
    s.add_argument("--out", help="output directory (default: out)")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep-failures", help="simulated vs closed-form ENTER delay over a burst grid")
    s.add_argument("--max-f", type=int, default=10)
    s.add_argument("--out", help="output directory (default: stdout)")
    s.set_defaults(func=cmd_sweep_failures)

    s = sub.add_parser("expected-delay", help="expected ENTER delay against distance")
    s.add_argument("--env", choices=[e.value for e in ch.Environment], default="open")
    s.add_argument("--xi", help="comma separated, 0 = independent losses (default 0,0.5,0.7,0.9)")
    s.add_argument("--dmin", type=float, default=0.0)
    s.add_argument("--dmax", type=float, default=500.0)
    s.add_argument("--dstep", type=float, default=10.0)
    s.add_argument("--out", help="output directory (default: stdout)")
    s.set_defaults(func=cmd_expected_delay)

    s = sub.add_parser("verify", help="run the acceptance checks")
    s.add_argument("--only", action="append", help="run just this check (repeatable)")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

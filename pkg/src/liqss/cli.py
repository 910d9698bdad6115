"""Command-line front end.

Subcommands ``run-reference``, ``run-liqss``, ``compare`` and ``sweep`` write
CSV files into the output directory.  Exit codes: 0 success, 2 bad
configuration, 3 numerical failure, 4 one or more sweep rows failed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import ResampledSeries, error_report, quantum_sweep
from .config import ConfigError, RunConfig, load_config
from .qss_core import SchedulingError, SimulationError
from .reference import DenseTrajectory, ReferenceSolverError

__all__ = ["main", "cmd_run_reference", "cmd_run_liqss", "cmd_compare", "cmd_sweep"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SWEEP = 0, 2, 3, 4
DEFAULT_DQ_LIST = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    # repr of a Python float is the shortest string that round-trips
    return repr(float(v))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _series_rows(times: np.ndarray, values: np.ndarray):
    # tolist() hands back Python floats, which keeps repr() cheap
    for t, row in zip(times.tolist(), values.tolist()):
        yield [t, *row]


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_liqss(cfg: RunConfig, record: bool):
    q = cfg.quanta
    return cfg.scenario().liqss(q.flux_dq, speed_dq=q.speed_dq, angle_dq=q.angle_dq,
                                overrides=q.overrides, record=record)


def cmd_run_reference(cfg: RunConfig) -> list[Path]:
    """Integrate the reference and write ``reference.csv``."""
    ref = cfg.scenario().reference()
    out = _out_dir(cfg)
    return [write_csv(out / "reference.csv", ("t", *ref.names),
                      _series_rows(ref.times, ref.values))]


def cmd_run_liqss(cfg: RunConfig) -> list[Path]:
    """Run LIQSS1; write per-state event files, the resampled series and update counts."""
    res = _run_liqss(cfg, record=True)
    out = _out_dir(cfg)
    files = []
    for name in res.names:
        ts, qs = res.trajectory[name]
        files.append(write_csv(out / f"liqss_events_{name}.csv", ("t", "q"),
                               _series_rows(ts, qs[:, None])))
    rs = cfg.scenario().resampled(res)
    files.append(write_csv(out / "liqss_resampled.csv", ("t", *res.names),
                           _series_rows(rs.grid.times, rs.values)))
    files.append(write_csv(out / "updates.csv", ("state", "count", "intensity"),
                           ([n, int(c), float(i)] for n, c, i in
                            zip(res.names, res.update_counts, res.intensity()))))
    return files


def _state_rows(names, *cols):
    for name, *vals in zip(names, *cols):
        yield [name, *vals]


def cmd_compare(cfg: RunConfig, *, reference: DenseTrajectory | None = None,
                liqss: ResampledSeries | DenseTrajectory | None = None,
                update_counts=None) -> tuple[list[Path], str]:
    """Score LIQSS1 against the reference; write ``error_report.csv``.

    `reference`, `liqss` and `update_counts` let callers inject trajectories
    instead of simulating.  Returns the written files and the summary line.
    """
    scen = cfg.scenario()
    ref = scen.reference() if reference is None else reference
    if liqss is None:
        res = _run_liqss(cfg, record=False)
        liqss, update_counts = scen.resampled(res), res.update_counts
    rep = error_report(liqss, ref, update_counts)
    out = _out_dir(cfg)
    path = write_csv(out / "error_report.csv", ("state", "tane", "count", "intensity"),
                     _state_rows(rep.names, rep.tane.tolist(), rep.update_counts.tolist(),
                                 rep.intensity.tolist()))
    summary = f"max_error={_fmt(rep.max_error)} total_updates={rep.total_updates}"
    (out / "summary.txt").write_text(summary + "\n")
    return [path, out / "summary.txt"], summary


def _workers() -> int:
    raw = os.environ.get("LIQSS_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LIQSS_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("LIQSS_THREADS must be >= 1")
    return n


def cmd_sweep(cfg: RunConfig, dq_list: Sequence[float] = DEFAULT_DQ_LIST
              ) -> tuple[list[Path], bool]:
    """Quantum sweep; write ``sweep.csv`` sorted by quantum.  Returns (files, all_ok)."""
    q = cfg.quanta
    ratio = 0.1 if q.speed_dq is None else q.speed_dq / q.flux_dq
    rows = quantum_sweep(cfg.scenario(), sorted(dq_list), speed_ratio=ratio,
                         overrides=q.overrides, workers=_workers())
    out = _out_dir(cfg)
    path = write_csv(out / "sweep.csv", ("delta_q", "max_error", "total_updates", "wall_time_s"),
                     ([r.delta_q, r.max_error,
                       r.total_updates if math.isnan(r.total_updates) else int(r.total_updates),
                       r.wall_time] for r in rows))
    for r in rows:
        if r.error:
            print(f"sweep row delta_q={r.delta_q!r} failed: {r.error}", file=sys.stderr)
    return [path], all(r.error is None for r in rows)


def _dq_list(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad quantum list {text!r}") from None
    if not vals or not all(v > 0 for v in vals):
        raise argparse.ArgumentTypeError("quanta must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config (default: shipped)")
    common.add_argument("--out-dir", metavar="PATH")
    common.add_argument("--t-end", type=float, metavar="S")
    common.add_argument("--dq", type=float, metavar="X", help="flux quantum (Wb)")
    common.add_argument("--dq-speed", type=float, metavar="X", help="speed quantum (rad/s)")
    common.add_argument("--dump-config", metavar="PATH",
                        help="write the resolved config ('-' for stdout) and exit")

    p = argparse.ArgumentParser(prog="liqss", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run-reference", parents=[common], help="Euler reference run")
    sub.add_parser("run-liqss", parents=[common], help="LIQSS1 run")
    sub.add_parser("compare", parents=[common], help="LIQSS1 vs reference error report")
    sw = sub.add_parser("sweep", parents=[common], help="error and cost over quantum sizes")
    sw.add_argument("--dq-list", type=_dq_list, default=list(DEFAULT_DQ_LIST),
                    metavar="X,Y,...")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(
            out_dir=args.out_dir, t_end=args.t_end, dq=args.dq, dq_speed=args.dq_speed)
        if args.dump_config:
            if args.dump_config == "-":
                sys.stdout.write(cfg.dumps())
            else:
                Path(args.dump_config).write_text(cfg.dumps())
            return EXIT_OK
        if args.command == "run-reference":
            files = cmd_run_reference(cfg)
        elif args.command == "run-liqss":
            files = cmd_run_liqss(cfg)
        elif args.command == "compare":
            files, summary = cmd_compare(cfg)
            print(summary)
        else:
            files, ok = cmd_sweep(cfg, args.dq_list)
            if not ok:
                return EXIT_SWEEP
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ReferenceSolverError, SimulationError, SchedulingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

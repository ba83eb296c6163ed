"""Command-line entry point: ``hbfsim {gen-channels,run,sweep,compare}``.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Keys are SystemConfig fields (``n_tv``, ``k_users``, ``n_c``, ...),
PowerModel fields (``epsilon``, ``p_rf``, ...) or experiment settings
(``scheme``, ``realizations``, ``seed``, ``pt_dbm``, ``ncpe``,
``inner_solver``, ``max_sweeps``, ``swap_moves``, ``wmmse_max_iters``,
``wmmse_tol``). Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import ast
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Dict, List

from . import harness, io
from .channel import SystemConfig, generate_channel
from .errors import HBFError
from .metrics import PowerModel

SYSTEM_KEYS = {f.name for f in dataclasses.fields(SystemConfig)}
POWER_KEYS = {f.name for f in dataclasses.fields(PowerModel)} - {"architecture"}
EXPERIMENT_KEYS = {"scheme", "realizations", "seed", "pt_dbm", "ncpe", "inner_solver",
                   "max_sweeps", "swap_moves", "wmmse_max_iters", "wmmse_tol"}


class CliError(Exception):
    pass


def _value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config(path) -> Dict[str, object]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SYSTEM_KEYS | POWER_KEYS | EXPERIMENT_KEYS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _value(val)
    return out


def _float_list(value) -> List[float]:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    try:
        return [float(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise CliError(f"expected a comma-separated list of numbers, got {value!r}") from None


def build_specs(args) -> List[harness.ExperimentSpec]:
    settings = read_config(args.config) if args.config else {}
    try:
        return _specs_from_settings(settings, args)
    except HBFError:
        raise
    except (TypeError, ValueError) as exc:
        # wrongly typed values from a config file
        raise CliError(f"bad configuration: {exc}") from None


def _specs_from_settings(settings, args) -> List[harness.ExperimentSpec]:
    config = SystemConfig(**{k: v for k, v in settings.items() if k in SYSTEM_KEYS})
    power = PowerModel(**{k: v for k, v in settings.items() if k in POWER_KEYS})
    if args.seed is not None:
        settings["seed"] = args.seed
    if args.realizations is not None:
        settings["realizations"] = args.realizations
    if args.pt_dbm is not None:
        settings["pt_dbm"] = args.pt_dbm
    if args.ncpe is not None:
        settings["ncpe"] = args.ncpe
    schemes = args.scheme or [settings.get("scheme", "coordinate_ascent/conj_phase_match/wmmse")]
    names = [s for group in schemes for s in str(group).split(",") if s.strip()]
    common = dict(
        config=config,
        power_model=power,
        realizations=int(settings.get("realizations", 10)),
        base_seed=int(settings.get("seed", 0)),
        pt_sweep_dbm=tuple(_float_list(settings.get("pt_dbm", 30.0))),
        ncpe_sweep=tuple(_float_list(settings.get("ncpe", 0.0))),
    )
    for key in ("inner_solver", "max_sweeps", "swap_moves", "wmmse_max_iters", "wmmse_tol"):
        if key in settings:
            common[key] = settings[key]
    return [harness.ExperimentSpec(**common, **harness.parse_scheme(n)) for n in names]


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _report_failures(rows) -> None:
    failed = [r for r in rows if r.error]
    if failed:
        print(f"{len(failed)} of {len(rows)} rows failed; first: {failed[0].error}",
              file=sys.stderr)


def cmd_gen_channels(args) -> None:
    spec = build_specs(args)[0]
    if not args.out:
        raise CliError("gen-channels needs --out <directory>")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(spec.realizations):
        seed = spec.base_seed + i
        io.save_channel(out / f"channel_{seed:08d}.hbfc", generate_channel(spec.config, seed).h)
    print(f"wrote {spec.realizations} channel files to {out}", file=sys.stderr)


def cmd_run(args) -> None:
    specs = build_specs(args)
    if len(specs) != 1:
        raise CliError("run takes exactly one scheme; use compare for several")
    spec = specs[0]
    if args.command == "run" and (len(spec.pt_sweep_dbm) > 1 or len(spec.ncpe_sweep) > 1):
        raise CliError("run takes a single power and NCPE; use sweep for grids")
    rows = harness.run(spec, workers=args.workers, timing=args.timing)
    _emit(harness.rows_to_csv(rows), args.out)
    _report_failures(rows)


def cmd_compare(args) -> None:
    rows, summary = harness.compare(build_specs(args), workers=args.workers, timing=args.timing)
    _emit(harness.rows_to_csv(rows), args.out)
    text = harness.summary_to_text(summary)
    if args.summary:
        Path(args.summary).write_text(text)
    else:
        sys.stderr.write(text)
    _report_failures(rows)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hbfsim", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {"gen-channels": cmd_gen_channels, "run": cmd_run, "sweep": cmd_run,
                "compare": cmd_compare}
    helps = {"gen-channels": "write channel realizations as HBFC files",
             "run": "one scheme at one power/NCPE -> CSV",
             "sweep": "one scheme over a power/NCPE grid -> CSV",
             "compare": "several schemes on paired channels -> CSV + summary"}
    for name, handler in handlers.items():
        p = sub.add_parser(name, help=helps[name])
        p.set_defaults(handler=handler)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, help="base seed; realization i uses seed + i")
        p.add_argument("--out", help="output CSV path (directory for gen-channels)")
        p.add_argument("--scheme", action="append",
                       help="selection[/analog[/digital]]; repeat or comma-separate for compare")
        p.add_argument("--pt-dbm", help="comma list of per-subcarrier powers in dBm")
        p.add_argument("--ncpe", help="comma list of target NCPE values")
        p.add_argument("--realizations", type=int)
        p.add_argument("--workers", type=int, default=1, help="worker threads over realizations")
        p.add_argument("--timing", action="store_true", help="fill the wall_time_ms column")
        if name == "compare":
            p.add_argument("--summary", help="write the per-scheme summary here instead of stderr")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR, format="%(levelname)s %(message)s")
    try:
        args.handler(args)
    except (CliError, HBFError, OSError) as exc:
        print(f"hbfsim: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

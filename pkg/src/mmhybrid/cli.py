"""Command line entry point: ``mmhybrid run | list | validate``."""

import argparse
import dataclasses
import hashlib
import io
import json
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    bundled_names,
    bundled_text,
    describe,
    from_dict,
    loads,
    parse_snr_grid,
    to_dict,
)
from .evaluation import FLAG_NAMES, SCHEMES, monte_carlo

CSV_SCHEMA = 1
CSV_COLUMNS = ("snr_db", "scheme", "mean_sum_rate", "stderr", "b_rf", "b_bb", "flags",
               "selection", "mean_common_rate", "mean_t", "interference_free", "trials")


def _num(x):
    """Fixed, platform-independent float formatting for the CSV."""
    return f"{float(x):.10g}"


def report_csv(report):
    """Render a :class:`RateReport` as CSV text.

    The first line is ``#schema=1``; the per-user mean rates follow the fixed
    columns as ``rate_user1 .. rate_userK``. Rows without a single valid
    trial are left out (and listed in the manifest).
    """
    K = report.config.scenario.n_users
    buf = io.StringIO()
    buf.write(f"#schema={CSV_SCHEMA}\n")
    buf.write(",".join(CSV_COLUMNS + tuple(f"rate_user{k + 1}" for k in range(K))) + "\n")
    for r in report.rows:
        if r.trials == 0:
            continue
        unknown = set(r.flags) - set(FLAG_NAMES)
        if unknown:
            raise RuntimeError(f"undocumented flags {sorted(unknown)}")
        fields = [_num(r.snr_db), r.scheme, _num(r.mean_sum_rate), _num(r.stderr),
                  str(r.b_rf), str(r.b_bb), r.flag_text(), r.selection,
                  _num(r.mean_common_rate), _num(r.mean_t), _num(r.interference_free),
                  str(r.trials)]
        fields += [_num(v) for v in r.per_user]
        buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def _apply_overrides(configs, args):
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.snr_grid is not None:
        changes["snr_db"] = parse_snr_grid(args.snr_grid)
    if args.scheme:
        changes["schemes"] = tuple(args.scheme)
    out = []
    for cfg in configs:
        c = dict(changes)
        if args.seed is not None:
            c["seed"] = args.seed
            c["scenario"] = dataclasses.replace(cfg.scenario, seed=args.seed)
        out.append(dataclasses.replace(cfg, **c))
    return out


def _load(source):
    """Configs from a bundled name, a config path, or a previous run's manifest."""
    if source.endswith(".json"):
        with open(source, encoding="utf-8") as fh:
            manifest = json.load(fh)
        return [from_dict(d) for d in manifest["experiments"]], manifest.get("config_sha256")
    if source in bundled_names():
        text = bundled_text(source)
        configs = loads(text, f"<bundled>/{source}.ini")
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
        configs = loads(text, source)
    return configs, hashlib.sha256(text.encode("utf-8")).hexdigest()


def cmd_run(args):
    try:
        configs, digest = _load(args.config)
        configs = _apply_overrides(configs, args)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(monte_carlo, configs))
    else:
        reports = [monte_carlo(cfg) for cfg in configs]

    outputs = {}
    omitted = []
    for cfg, rep in zip(configs, reports):
        outputs[f"{cfg.name}.csv"] = report_csv(rep)
        omitted += [{"experiment": cfg.name, "snr_db": r.snr_db, "scheme": r.scheme,
                     "b_rf": r.b_rf, "b_bb": r.b_bb, "flags": r.flag_text()}
                    for r in rep.rows if r.trials == 0]
    manifest = {
        "tool": "mmhybrid",
        "version": __version__,
        "config": args.config,
        "config_sha256": digest,
        "output_dir": os.path.abspath(args.out),
        "master_seed": configs[0].seed,
        "overrides": {"trials": args.trials, "seed": args.seed,
                      "snr_grid": args.snr_grid, "scheme": args.scheme},
        "numpy": np.__version__,
        "experiments": [to_dict(c) for c in configs],
        "csv": sorted(outputs),
        "omitted_rows": omitted,
    }
    outputs["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"

    # write everything next to the target first so a failure leaves no partial output
    os.makedirs(args.out, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".mmhybrid-", dir=args.out)
    try:
        for name, text in outputs.items():
            with open(os.path.join(staging, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        for name in outputs:
            os.replace(os.path.join(staging, name), os.path.join(args.out, name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    for name in sorted(outputs):
        print(os.path.join(args.out, name))
    return 0


def cmd_list(args):
    for name in bundled_names():
        configs = loads(bundled_text(name), name)
        print(f"{name:8s} {describe(configs)}")
    return 0


def cmd_validate(args):
    try:
        configs, _ = _load(args.config)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for cfg in configs:
        sc = cfg.scenario
        print(f"ok {cfg.name}: {sc.kind} M={sc.n_antennas} K={sc.n_users} "
              f"L={sc.n_paths} B={cfg.b_total} split={cfg.split} "
              f"schemes={len(cfg.schemes)} snr_points={len(cfg.snr_db)} trials={cfg.trials}")
    return 0


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmhybrid",
        description="Monte Carlo sum rates of limited-feedback hybrid precoding "
                    "and rate splitting in multiuser mmWave downlinks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiments of a config file")
    run.add_argument("config", help="config file, bundled config name or run manifest")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--trials", type=_positive_int)
    run.add_argument("--seed", type=int)
    run.add_argument("--snr-grid", metavar="A:B:STEP")
    run.add_argument("--scheme", nargs="+", choices=SCHEMES, metavar="NAME",
                     help=f"subset of schemes; any of {', '.join(SCHEMES)}")
    run.add_argument("--jobs", type=_positive_int, default=1,
                     help="worker processes for multi-experiment configs")
    run.set_defaults(func=cmd_run)

    lst = sub.add_parser("list", help="list the bundled configs")
    lst.set_defaults(func=cmd_list)

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

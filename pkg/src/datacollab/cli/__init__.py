"""Command-line entry point: ``datacollab {run,coordinator,party,synth,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataCollabError
from .config import MODES, load_config
from .report import RunReport, emit_report

log = logging.getLogger("datacollab")


def _add_config_args(p):
    p.add_argument("--config", "-c", help="YAML or JSON config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set anchor.r=40 (repeatable)")


def _config(args):
    overrides = list(args.overrides)
    if getattr(args, "modes", None):
        overrides.append("modes=[" + ",".join(args.modes) + "]")
    if getattr(args, "output", None):
        overrides.append(f"output.path={args.output}")
    if getattr(args, "format", None):
        overrides.append(f"output.format={args.format}")
    return load_config(args.config, overrides)


def cmd_run(args):
    from .experiment import run_experiment

    cfg = _config(args)
    report = run_experiment(cfg)
    if cfg.output_path:
        emit_report(report, cfg.output_path, cfg.output_format)
        log.info("report written to %s", cfg.output_path)
    else:
        text = report.to_jsonl() if cfg.output_format == "json-lines" else report.to_table()
        sys.stdout.write(text)
    return 0


def cmd_coordinator(args):
    from ..protocol import Coordinator
    from .experiment import coordinator_config

    cfg = _config(args)
    # the coordinator never loads party data; m comes from the flag or the synth settings
    m = args.m
    if m is None and cfg.data.get("source") == "synth":
        m = int(cfg.data["synth"]["m"])
    if m is None:
        raise ConfigError("coordinator needs --m when the data source is not synth")
    coord = Coordinator(coordinator_config(cfg, m), host=args.host, port=args.port,
                        timeout=float(cfg.network.get("timeout", 60.0)))
    host, port = coord.address
    if args.port_file:
        tmp = Path(args.port_file).with_suffix(".tmp")
        tmp.write_text(str(port))
        tmp.replace(args.port_file)
    log.info("coordinator listening on %s:%d", host, port)
    state = coord.serve()
    if args.summary:
        summary = Path(args.summary)
        t = state.transform
        np.save(summary.with_name("x_hat.npy"), state.collaboration.x_hat)
        summary.write_text(json.dumps({
            "alignment_residual": float(t.alignment_residual),
            "singular_values": [float(s) for s in t.sigma],
            "x_hat": "x_hat.npy",
        }), encoding="utf-8")
    return 0


def cmd_party(args):
    from ..protocol import connect, party_run
    from .experiment import load_parties

    cfg = _config(args)
    parties = load_parties(cfg)
    if not 0 <= args.index < len(parties):
        raise ConfigError(f"party index {args.index} out of range for {len(parties)} parties")
    conn = connect(args.host, args.port, timeout=float(cfg.network.get("timeout", 60.0)))
    outcome = party_run(parties[args.index], cfg.mappers[args.index], conn, requested_id=args.index)
    preds = outcome.predictions
    record = {"party_id": outcome.party_id, "classes": list(preds.classes), "indices": preds.indices.tolist()}
    if args.output:
        Path(args.output).write_text(json.dumps(record), encoding="utf-8")
    else:
        sys.stdout.write(json.dumps(record) + "\n")
    return 0


def cmd_synth(args):
    from .data import save_dataset, synth_imbalanced

    parties = synth_imbalanced(args.m, args.classes, args.parties, args.per_party, args.skew, args.seed,
                               test_per_party=args.test_per_party, separation=args.separation)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, p in enumerate(parties):
        save_dataset(out / f"party{i}_train.csv", p.x_train, p.y_train)
        save_dataset(out / f"party{i}_test.csv", p.x_test, p.y_test)
    log.info("wrote %d parties to %s", len(parties), out)
    return 0


def cmd_report(args):
    report = RunReport.from_jsonl(Path(args.input).read_text(encoding="utf-8"))
    if args.out:
        emit_report(report, args.out, args.format)
    else:
        sys.stdout.write(report.to_table() if args.format == "human-table" else report.to_jsonl())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="datacollab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the configured analysis modes in process")
    _add_config_args(p)
    p.add_argument("--mode", dest="modes", action="append", choices=MODES)
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("json-lines", "human-table"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("coordinator", help="serve one collaboration session over TCP")
    _add_config_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--m", type=int, help="feature count (default: data.synth.m)")
    p.add_argument("--port-file", help="write the bound port here once listening")
    p.add_argument("--summary", help="write diagnostics JSON (and x_hat.npy next to it)")
    p.set_defaults(func=cmd_coordinator)

    p = sub.add_parser("party", help="take part in a session as one party")
    _add_config_args(p)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--output", help="write predictions JSON here")
    p.set_defaults(func=cmd_party)

    p = sub.add_parser("synth", help="write a synthetic imbalanced benchmark as CSV")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--parties", type=int, default=4)
    p.add_argument("--per-party", type=int, default=50)
    p.add_argument("--test-per-party", type=int, default=20)
    p.add_argument("--skew", type=float, default=0.9)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="re-render a json-lines report")
    p.add_argument("input")
    p.add_argument("--format", choices=("json-lines", "human-table"), default="human-table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataCollabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code

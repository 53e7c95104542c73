"""Command-line entry point: ``mdiqn {simulate,analyze,optimize,plan,curve}``.

Exit status: 0 success, 2 configuration error, 3 data error (including
infeasible estimation), 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from .config import ConfigError, SessionConfig, load_config
from .finitekey import finite_key_pipeline
from .gaintable import GainRecord, format_gain_table, ingest_gain_table
from .model import SAME_BASIS_PAIRS, DataError
from .network import build_tdm_schedule, plan_full_mesh, to_json
from .optimizer import PARAM_NAMES, optimize_protocol, rate_vs_loss
from .photonic import simulate_tally

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("mdiqn")


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def format_records(records: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(records, indent=2) + "\n"
    buf = io.StringIO()
    cols: list[str] = []
    for rec in records:
        cols += [k for k in rec if k not in cols]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rec in records:
        w.writerow([_fmt(rec.get(c)) for c in cols])
    return buf.getvalue()


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text)
    return path


def _selected(cfg: SessionConfig, pairs: str | None) -> list[str]:
    if not pairs:
        return cfg.pairs
    chosen = [p.strip() for p in pairs.split(",") if p.strip()]
    missing = [p for p in chosen if p not in cfg.pair_loss_db]
    if missing:
        raise ConfigError(f"--pairs: not configured: {missing}")
    return chosen


def _simulate(cfg: SessionConfig, pairs: list[str]) -> list[GainRecord]:
    if not pairs:
        raise ConfigError("no user pairs configured: set [network.loss_db] or default_loss_db")
    index = {p: i for i, p in enumerate(cfg.pairs)}
    records = []
    for pair in pairs:
        tally = simulate_tally(
            cfg.pair_link(pair), cfg.protocol, cfg.rounds(), [cfg.seed, index[pair]],
            mode=cfg.sim_mode, shards=cfg.shards, workers=cfg.workers, poisson=cfg.poisson,
        )
        meta = {"pair": pair, "loss_db": _fmt(cfg.pair_loss_db[pair])}
        records.append(GainRecord(pair, tally, meta))
    return records


def _tally_records(records: list[GainRecord]) -> list[dict]:
    out = []
    for rec in records:
        row = {"label": rec.label, **rec.metadata}
        for l, r in SAME_BASIS_PAIRS:
            if (l, r) in rec.tally:
                c = rec.tally[l, r]
                row[f"N_{l}{r}"] = c.sent
                row[f"NS_{l}{r}"] = c.success
                row[f"NSE_{l}{r}"] = c.error
        out.append(row)
    return out


def cmd_simulate(cfg: SessionConfig, args, out: Path) -> int:
    records = _simulate(cfg, _selected(cfg, args.pairs))
    if args.format == "json":
        _write(out, "gains.json", format_records(_tally_records(records), "json"))
    else:
        note = [f"simulated gain table: mode={cfg.sim_mode}, rounds={cfg.rounds()}, seed={cfg.seed}"]
        _write(out, "gains.csv", format_gain_table(records, note))
        for rec in records:
            _write(out, f"tally_{rec.label}.csv", format_gain_table([rec], note))
    print(f"simulated {len(records)} pair(s) into {out}")
    return EXIT_OK


def _analyze_one(job):
    rec, protocol, epsilon, f, n_cut = job
    return finite_key_pipeline(rec.tally, protocol, epsilon, f, n_cut)


def cmd_analyze(cfg: SessionConfig, args, out: Path) -> int:
    source = args.gains or cfg.gain_table
    if source:
        records = ingest_gain_table(source, cfg.protocol)
        if args.pairs:
            keep = {p.strip() for p in args.pairs.split(",")}
            records = [r for r in records if r.label in keep or r.pair in keep]
            if not records:
                raise ConfigError(f"--pairs matched no rows of {source}")
    else:
        records = _simulate(cfg, _selected(cfg, args.pairs))
    jobs = [(rec, cfg.protocol, cfg.epsilon, cfg.f, cfg.n_cut) for rec in records]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reports = list(pool.map(_analyze_one, jobs))
    else:
        reports = [_analyze_one(j) for j in jobs]
    rows = []
    for rec, rep in zip(records, reports):
        row = {"label": rec.label, "pair": rec.pair}
        if "loss_db" in rec.metadata:
            row["loss_db"] = float(rec.metadata["loss_db"])
        row.update(rep.to_record())
        rows.append(row)
    mean_bps = sum(r.rate_bps for r in reports) / len(reports)
    summary = {
        "pairs": len(reports),
        "mean_rate_per_pulse": sum(r.rate_per_pulse for r in reports) / len(reports),
        "mean_rate_bps": mean_bps,
        "min_rate_bps": min(r.rate_bps for r in reports),
        "max_rate_bps": max(r.rate_bps for r in reports),
    }
    ext = args.format
    _write(out, f"reports.{ext}", format_records(rows, ext))
    _write(out, f"summary.{ext}", format_records([summary], ext) if ext == "csv"
           else json.dumps(summary, indent=2) + "\n")
    for row in rows:
        print(f"{row['label']:>8}  {row['rate_bps']:10.2f} bps  s11>={row['s11_lower']:.4g}  "
              f"e11<={row['e11ph_upper']:.4g}")
    print(f"mean key rate: {mean_bps:.2f} bps over {len(reports)} pair(s)")
    return EXIT_OK


def cmd_optimize(cfg: SessionConfig, args, out: Path) -> int:
    loss = cfg.optimize_loss_db
    if loss is None:
        losses = list(cfg.pair_loss_db.values())
        loss = sum(losses) / len(losses) if losses else 30.0
    res = optimize_protocol(
        cfg.link(loss), cfg.protocol.n_pulses, cfg.epsilon, cfg.f, start=cfg.protocol,
        restarts=cfg.optimize_restarts, seed=cfg.optimize_seed, max_evals=cfg.optimize_max_evals,
    )
    rec = {"loss_db": loss, **res.to_record()}
    trace = [{**dict(zip(PARAM_NAMES, v)), "rate_per_pulse": r} for v, r in res.trace]
    _write(out, f"optimize.{args.format}", format_records([rec], args.format))
    _write(out, f"optimize_trace.{args.format}", format_records(trace, args.format))
    print(f"best rate {res.rate_per_pulse:.6g}/pulse ({res.rate_bps:.2f} bps) at {loss:g} dB "
          f"after {len(res.trace)} evaluations")
    return EXIT_OK


def cmd_plan(cfg: SessionConfig, args, out: Path) -> int:
    n = args.users or cfg.n_users
    if n < 2:
        raise ConfigError("--users must be at least 2")
    if cfg.plan_scheme in ("wdm", "both"):
        topo = plan_full_mesh(n)
        if args.format == "json":
            _write(out, "wdm.json", to_json(topo))
        else:
            _write(out, "wdm.csv", format_records(topo.to_dict()["links"], "csv"))
        print(f"wdm: {len(topo.channels)} channels, {topo.bsm_count} BSM modules")
    if cfg.plan_scheme in ("tdm", "both"):
        sched = build_tdm_schedule(n)
        if args.format == "json":
            _write(out, "tdm.json", to_json(sched))
        else:
            rows = [{"bin": s["bin"], "group": s["group"], "bsm": s["bsm"],
                     "user_1": s["pair"][0], "user_2": s["pair"][1]}
                    for s in sched.to_dict()["slots"]]
            _write(out, "tdm.csv", format_records(rows, "csv"))
        table = sched.render_table()
        _write(out, "tdm_table.txt", table)
        print(table, end="")
    return EXIT_OK


def cmd_curve(cfg: SessionConfig, args, out: Path) -> int:
    points = rate_vs_loss(
        cfg.curve_losses, cfg.curve_mode, protocol=cfg.protocol, link_factory=cfg.link,
        epsilon=cfg.epsilon, f=cfg.f, seed=cfg.optimize_seed,
        max_evals=cfg.optimize_max_evals,
    )
    _write(out, f"curve.{args.format}", format_records([p.to_record() for p in points], args.format))
    for p in points:
        print(f"{p.loss_db:7.2f} dB  {p.rate_per_pulse:.6g}/pulse")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "plan": cmd_plan,
    "curve": cmd_curve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdiqn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML session file (defaults apply when omitted)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="override the configured seeds")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--pairs", help="comma-separated subset of pairs, e.g. AB,CD")
        if name == "analyze":
            p.add_argument("--gains", help="gain-table CSV to analyse ('bundled' for the shipped set)")
        if name == "plan":
            p.add_argument("--users", type=int, help="override network.n_users")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else SessionConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = cfg.replace(seed=args.seed, optimize_seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        log.error("configuration: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data: %s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("i/o: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("configuration: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

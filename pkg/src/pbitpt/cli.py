"""Command line front end.

Subcommands: gen (write instance files), schedule (build annealing ladders),
run (residual/BER sweeps from a config), detect (single-instance detection),
report (aggregate result files into CSV tables).

Exit codes: 0 success, 2 config/validation error, 3 oracle size guard.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (ConfigError, ExperimentConfig, gen_sk,
                    ground_state_exhaustive, run_experiment, _resolve_schedule)
from .mimo import MimoInstance, ber, gen_instance, ml_bruteforce, mmse_detect
from .models import (OracleGuardError, map_mimo_to_ising, normalize_weights,
                     sparsify)
from .rng import RandomStream
from .serialize import format_csv, load_json, to_jsonable, write_csv, write_json

RESIDUAL_RECORD_COLUMNS = [
    "problem", "n", "copies", "solver", "instance", "trial", "n_swaps",
    "e_best", "e_ground", "oracle", "residual", "agreement_pct",
    "modeled_seconds"]
RESIDUAL_SUMMARY_COLUMNS = [
    "problem", "n", "solver", "n_swaps", "n_runs", "mean_residual",
    "median_residual", "ci_low", "ci_high", "seed", "schedule_source",
    "hw_profile", "oracle"]
BER_RECORD_COLUMNS = [
    "problem", "n", "snr_db", "detector", "channel", "symbol", "errors",
    "bits"]
BER_SUMMARY_COLUMNS = [
    "problem", "n", "snr_db", "detector", "n_instances", "ber", "ci_low",
    "ci_high", "seed", "schedule_source", "hw_profile", "oracle"]

_SUMMARY_COLUMNS = {"sk_residual": RESIDUAL_SUMMARY_COLUMNS,
                    "mimo_ber": BER_SUMMARY_COLUMNS}
_RECORD_COLUMNS = {"sk_residual": RESIDUAL_RECORD_COLUMNS,
                   "mimo_ber": BER_RECORD_COLUMNS}
# report: count columns are summed inside a group, other numerics averaged
_GROUP_KEYS = {"sk_residual": ("problem", "n", "solver", "n_swaps"),
               "mimo_ber": ("problem", "n", "snr_db", "detector")}
_COUNT_COLUMNS = {"n_runs", "n_instances"}
_LABEL_COLUMNS = {"seed", "schedule_source", "hw_profile", "oracle"}


def _load_config(path: str) -> ExperimentConfig:
    try:
        raw = load_json(path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return ExperimentConfig.from_dict(raw)


def gen_cmd(args) -> int:
    out = Path(args.out)
    master = RandomStream(args.seed)
    for idx in range(args.instances):
        stream = master.child("instance", idx)
        if args.problem == "sk":
            model = gen_sk(args.n, stream.child("gen"))
            payload = {"problem": "sk", "n": args.n, "seed": args.seed,
                       "instance": idx, "j": model.j, "h": model.h}
        else:
            inst = gen_instance(args.n, args.n, args.snr_db, stream)
            payload = {"problem": "mimo", "n_t": inst.n_t, "n_r": inst.n_r,
                       "snr_db": inst.snr_db, "sigma2": inst.sigma2,
                       "seed": args.seed, "instance": idx, "h": inst.h,
                       "x_true": inst.x_true, "y": inst.y}
        write_json(out / f"instance_{idx:04d}.json", payload)
    print(f"wrote {args.instances} instance file(s) to {out}")
    return 0


def _schedule_models(cfg: ExperimentConfig, count: int, master: RandomStream):
    models = []
    for i in range(count):
        stream = master.child("schedule_instance", i)
        if cfg.problem == "sk":
            dense = gen_sk(cfg.n, stream.child("gen"))
        else:
            inst = gen_instance(cfg.n, cfg.n, cfg.snr_db[0], stream)
            dense = map_mimo_to_ising(inst.h, inst.y)
            if cfg.normalize:
                dense = normalize_weights(dense)
        models.append(sparsify(dense, cfg.copies, split_bias=cfg.split_bias))
    return models


def schedule_cmd(args) -> int:
    cfg = _load_config(args.config)
    if cfg.schedule["source"] != "adaptive":
        raise ConfigError("schedule subcommand requires an adaptive schedule")
    count = max(1, int(cfg.schedule.get("instances_to_average", 1)))
    master = RandomStream(cfg.seed)
    models = _schedule_models(cfg, count, master)
    arg = models if len(models) > 1 else models[0]
    betas, penalties = _resolve_schedule(arg, cfg.schedule, cfg.penalty,
                                         master.child("schedule"))
    payload = {"source": "adaptive", "problem": cfg.problem, "n": cfg.n,
               "copies": cfg.copies, "seed": cfg.seed,
               "alpha_beta": cfg.schedule["alpha_beta"],
               "alpha_p": cfg.schedule["alpha_p"],
               "instances_averaged": len(models),
               "betas": betas, "penalties": penalties,
               "shape": [len(betas), len(penalties)]}
    write_json(args.out, payload)
    print(f"schedule {len(betas)}x{len(penalties)} written to {args.out}")
    return 0


def run_cmd(args) -> int:
    cfg = _load_config(args.config)
    result = run_experiment(cfg)
    out = Path(args.out if args.out else (cfg.output or "results"))
    kind = result["kind"]
    write_json(out / "results.json",
               {"kind": kind, "config": cfg.to_dict(),
                "records": result["records"], "summary": result["summary"]})
    write_csv(out / "records.csv", result["records"], _RECORD_COLUMNS[kind])
    write_csv(out / "summary.csv", result["summary"], _SUMMARY_COLUMNS[kind])
    sys.stdout.write(format_csv(result["summary"], _SUMMARY_COLUMNS[kind]))
    return 0


def detect_cmd(args) -> int:
    raw = load_json(args.instance)
    if raw.get("problem") != "mimo":
        raise ConfigError("detect requires a mimo instance file")
    inst = MimoInstance(np.asarray(raw["h"], dtype=np.float64),
                        np.asarray(raw["x_true"], dtype=np.int8),
                        np.asarray(raw["y"], dtype=np.float64),
                        float(raw["sigma2"]), float(raw["snr_db"]))
    if args.detector == "mmse":
        x_hat = mmse_detect(inst, args.mmse_lambda)
        payload = {"detector": "mmse", "x_hat": x_hat}
    else:
        x_hat, obj = ml_bruteforce(inst)
        payload = {"detector": "ml", "x_hat": x_hat, "objective": obj}
    payload["ber"] = ber(x_hat, inst.x_true)
    payload["snr_db"] = inst.snr_db
    payload["instance"] = raw.get("instance")
    payload["seed"] = raw.get("seed")
    text = json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _group_label(values) -> str:
    uniq = sorted({str(v) for v in values})
    return ";".join(uniq)


def report_cmd(args) -> int:
    by_kind: dict[str, list[dict]] = {}
    for path in args.results:
        data = load_json(path)
        kind = data.get("kind")
        if kind not in _SUMMARY_COLUMNS:
            raise ConfigError(f"{path}: unknown result kind {kind!r}")
        by_kind.setdefault(kind, []).extend(data.get("summary", []))
    out = Path(args.out)
    written = []
    for kind in sorted(_SUMMARY_COLUMNS):
        rows = by_kind.get(kind)
        if rows is None and not args.all_tables:
            continue
        rows = rows or []
        keys = _GROUP_KEYS[kind]
        columns = _SUMMARY_COLUMNS[kind]
        groups: dict[tuple, list[dict]] = {}
        for row in rows:
            groups.setdefault(tuple(row.get(k) for k in keys), []).append(row)
        agg_rows = []
        for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
            members = groups[key]
            agg = dict(zip(keys, key))
            for col in columns:
                if col in agg:
                    continue
                vals = [m.get(col) for m in members]
                if col in _LABEL_COLUMNS:
                    agg[col] = _group_label(vals)
                elif col in _COUNT_COLUMNS:
                    agg[col] = int(sum(v for v in vals if v is not None))
                else:
                    nums = [float(v) for v in vals if v is not None]
                    agg[col] = float(np.mean(nums)) if nums else None
            agg_rows.append(agg)
        path = write_csv(out / f"{kind}.csv", agg_rows, columns)
        written.append(str(path))
    print("wrote " + (", ".join(written) if written else "no tables"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbitpt",
        description="Sparsified Ising solving with p-bit parallel tempering")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="write problem instance files")
    p_gen.add_argument("--problem", choices=["sk", "mimo"], required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--instances", type=int, default=1)
    p_gen.add_argument("--snr-db", type=float, default=10.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=gen_cmd)

    p_sched = sub.add_parser("schedule", help="build an adaptive ladder")
    p_sched.add_argument("--config", required=True)
    p_sched.add_argument("--out", required=True)
    p_sched.set_defaults(func=schedule_cmd)

    p_run = sub.add_parser("run", help="run the experiment in a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=run_cmd)

    p_det = sub.add_parser("detect", help="detect one stored instance")
    p_det.add_argument("--instance", required=True)
    p_det.add_argument("--detector", choices=["mmse", "ml"], required=True)
    p_det.add_argument("--mmse-lambda", type=float, default=None)
    p_det.add_argument("--out", default=None)
    p_det.set_defaults(func=detect_cmd)

    p_rep = sub.add_parser("report", help="aggregate result files to CSV")
    p_rep.add_argument("results", nargs="*")
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--all-tables", action="store_true",
                       help="emit empty tables for kinds with no input rows")
    p_rep.set_defaults(func=report_cmd)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OracleGuardError as exc:
        print(f"oracle guard: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front door: simulate, compare, recommend, fit."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    bundled_config_path,
    load_study_config,
    recommend_from_request,
    render_recommendation,
    rule_from_json,
    study_from_json,
    study_to_json,
)
from .forecasting import fit_richards, predict_rate
from .milp import WEIGHT_PRESETS
from .occupancy import kaplan_meier
from .simulator import RuleConfig, compare_rules, run_study

RULE_NAMES = {
    "SP-O": {"type": "SP", "preset": "SP-O"},
    "SP-B": {"type": "SP", "preset": "SP-B"},
    "SP-R": {"type": "SP", "preset": "SP-R"},
    "IH": {"type": "IH"},
    "PU": {"type": "PU"},
    "SP-DET-MEDIAN": {"type": "SP_DET", "preset": "SP-O", "statistic": "median"},
}


def _fail(msg: str, code: int = 2) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _load_config(path: str):
    if path == "euregio":
        return study_from_json(json.loads(bundled_config_path().read_text()))
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    return load_study_config(p)


def _apply_overrides(config, args):
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        over["replications"] = args.reps
    if getattr(args, "scenarios", None) is not None:
        over["scenarios_per_day"] = args.scenarios
    if getattr(args, "horizon", None) is not None:
        over["lookahead"] = args.horizon
    if getattr(args, "rule", None) is not None:
        if args.rule not in RULE_NAMES:
            raise ConfigError(f"unknown rule {args.rule!r}; choose from {sorted(RULE_NAMES)}")
        from .config import rule_from_json as _rfj

        base_rule = _rfj(RULE_NAMES[args.rule])
        over["rule"] = replace(base_rule, margins=config.rule.margins)
    return replace(config, **over) if over else config


def cmd_simulate(args) -> int:
    try:
        config = _apply_overrides(_load_config(args.config), args)
    except FileNotFoundError as exc:
        return _fail(f"no such file: {exc}")
    except (ConfigError, json.JSONDecodeError, ValueError) as exc:
        return _fail(str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    done = [0]

    def tick(_rep):
        done[0] += 1
        print(f"\r{config.rule.label()}: replication {done[0]}/{config.replications}", end="", flush=True)

    table = run_study(config, progress=tick)
    print()
    table.to_csv(out / "kpis.csv")
    (out / "kpis.json").write_text(json.dumps(table.to_json(), indent=2))
    (out / "config.json").write_text(json.dumps(study_to_json(config), indent=2))
    for entity in table.entities:
        row = "  ".join(
            f"{kpi}={table.mean(entity, kpi):.3f}"
            for kpi in ("overbeds", "underbeds", "reg_beds_used", "beds_reserved", "rooms_added_removed")
        )
        print(f"{entity:>8}: {row}")
    print(f"wrote {out / 'kpis.csv'}")
    return 0


def cmd_compare(args) -> int:
    try:
        configs = [_load_config(p) for p in args.configs]
        if args.rules:
            base = configs[0]
            configs = []
            for name in args.rules.split(","):
                ns = argparse.Namespace(rule=name.strip(), seed=None, reps=None, scenarios=None, horizon=None)
                configs.append(_apply_overrides(base, ns))
        shared = argparse.Namespace(
            rule=None, seed=args.seed, reps=args.reps, scenarios=args.scenarios, horizon=args.horizon
        )
        configs = [_apply_overrides(c, shared) for c in configs]
    except FileNotFoundError as exc:
        return _fail(f"no such file: {exc}")
    except (ConfigError, json.JSONDecodeError, ValueError) as exc:
        return _fail(str(exc))
    done = [0]
    total = configs[0].replications

    def tick(_rep):
        done[0] += 1
        print(f"\rcompare: replication {done[0]}/{total}", end="", flush=True)

    report = compare_rules(configs, progress=tick)
    print()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "comparison.csv")
    with open(out / "deltas.csv", "w") as fh:
        fh.write("rule_a,rule_b,kpi,delta_mean,delta_half_width\n")
        labels = [t.rule_label for t in report.tables]
        for i, a in enumerate(labels):
            for b in labels[i + 1 :]:
                for kpi in ("overbeds", "underbeds", "reg_beds_used", "beds_reserved", "rooms_added_removed"):
                    m, hw = report.delta(a, b, "REGION", kpi)
                    fh.write(f"{a},{b},{kpi},{m:.6f},{hw:.6f}\n")
    print(f"wrote {out / 'comparison.csv'} and {out / 'deltas.csv'}")
    return 0


def cmd_recommend(args) -> int:
    state_path = Path(args.state)
    if not state_path.exists():
        return _fail(f"no such file: {args.state}")
    try:
        state_doc = json.loads(state_path.read_text())
        if args.rule is not None:
            if args.rule not in RULE_NAMES:
                return _fail(f"unknown rule {args.rule!r}")
            rule_doc = RULE_NAMES[args.rule]
        elif "rule" in state_doc:
            rule_doc = state_doc.pop("rule")
        else:
            return _fail("no rule given: pass --rule or embed a rule block")
        request = {"state": state_doc.get("state", state_doc), "rule": rule_doc}
        result = recommend_from_request(request)
    except (ConfigError, json.JSONDecodeError, ValueError) as exc:
        return _fail(str(exc))
    text = render_recommendation(result)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_fit(args) -> int:
    arrivals_path = Path(args.arrivals)
    los_path = Path(args.los)
    for p in (arrivals_path, los_path):
        if not p.exists():
            return _fail(f"no such file: {p}")
    try:
        by_date: dict[str, float] = {}
        with open(arrivals_path) as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "date" not in reader.fieldnames or "count" not in reader.fieldnames:
                return _fail("arrivals CSV needs columns: date, hospital_id, count")
            for row in reader:
                by_date[row["date"]] = by_date.get(row["date"], 0.0) + float(row["count"])
        series = [by_date[k] for k in sorted(by_date)]
        records = []
        with open(los_path) as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "duration_days" not in reader.fieldnames:
                return _fail("LoS CSV needs columns: duration_days, censored")
            for row in reader:
                weight = int(float(row.get("weight", 1) or 1))
                rec = (float(row["duration_days"]), bool(int(row["censored"])))
                records.extend([rec] * weight)
        fit = fit_richards(np.asarray(series))
        los = kaplan_meier(records)
    except (ValueError, KeyError) as exc:
        return _fail(str(exc))
    horizon = args.horizon or 5
    curve = predict_rate(fit, len(series), horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "richards.json").write_text(
        json.dumps(
            {
                "params": list(fit.params),
                "n_obs": fit.n_obs,
                "residual_variance": fit.residual_variance,
                "degenerate": fit.degenerate,
                "predicted_rates": list(curve.daily_rates),
            },
            indent=2,
        )
    )
    (out / "los.json").write_text(json.dumps(los.to_json(), indent=2))
    print(f"fitted {len(series)} days of arrivals and {len(records)} stay records")
    print(f"wrote {out / 'richards.json'} and {out / 'los.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wardplan",
        description="Regional infectious-ward capacity planning: simulation study, "
        "daily recommendations, and estimation utilities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the Monte-Carlo study for one rule")
    sim.add_argument("config", help="study config JSON path, or 'euregio' for the bundled case")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--scenarios", type=int)
    sim.add_argument("--horizon", type=int)
    sim.add_argument("--rule", help="|".join(sorted(RULE_NAMES)))
    sim.add_argument("--out", default="out")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="run several rules under common random numbers")
    cmp_.add_argument("configs", nargs="+", help="config paths; or one path plus --rules")
    cmp_.add_argument("--rules", help="comma-separated rule names applied to the first config")
    cmp_.add_argument("--seed", type=int)
    cmp_.add_argument("--reps", type=int)
    cmp_.add_argument("--scenarios", type=int)
    cmp_.add_argument("--horizon", type=int)
    cmp_.add_argument("--out", default="out")
    cmp_.set_defaults(func=cmd_compare)

    rec = sub.add_parser("recommend", help="one decision epoch from a snapshot, no simulation")
    rec.add_argument("state", help="region snapshot JSON (optionally with an embedded rule)")
    rec.add_argument("--rule", help="|".join(sorted(RULE_NAMES)))
    rec.add_argument("--out")
    rec.set_defaults(func=cmd_recommend)

    fit = sub.add_parser("fit", help="fit the arrival curve and LoS distribution from CSVs")
    fit.add_argument("--arrivals", required=True, help="CSV: date, hospital_id, count")
    fit.add_argument("--los", required=True, help="CSV: duration_days, censored[, weight]")
    fit.add_argument("--horizon", type=int)
    fit.add_argument("--out", default="out")
    fit.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

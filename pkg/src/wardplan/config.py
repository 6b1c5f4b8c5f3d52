"""Study configuration files, region snapshots, and the recommend pipeline.

One JSON dialect backs both the CLI and the HTTP service: study configs
mirror ``SimConfig`` plus a rule block, and region snapshots capture the
state a planner sees at a decision epoch (rosters, room flags, arrival
history).  Everything is validated against JSON schemas with unknown keys
rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from importlib import resources

import jsonschema
import numpy as np

from .forecasting import FractionEstimate, fit_richards, predict_rate
from .milp import CostWeights, HospitalRooms, RoomLedger, WEIGHT_PRESETS
from .occupancy import LosDistribution, RateCurve, WardRoster
from .policies import DecisionContext, ih_decide, pu_decide, sp_decide
from .scenarios import assign_count_pmf, collapse_scenarios, generate_scenarios
from .simulator import DEFAULT_LOS, RuleConfig, SimConfig

WEIGHTS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in
                   ("alpha", "beta", "gamma", "delta", "epsilon")},
    "required": ["alpha", "beta", "gamma", "delta", "epsilon"],
}

RULE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "type": {"enum": ["SP", "SP_DET", "IH", "PU"]},
        "preset": {"enum": list(WEIGHT_PRESETS)},
        "weights": WEIGHTS_SCHEMA,
        "statistic": {
            "anyOf": [{"const": "median"}, {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}]
        },
        "quantile": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "designated": {"type": "integer", "minimum": 0},
        "split": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "rate_mode": {"enum": ["point", "upper90"]},
        "rel_gap": {"type": "number", "minimum": 0},
    },
    "required": ["type"],
}

HOSPITAL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string"},
        "standard_capacity": {"type": "integer", "exclusiveMinimum": 0},
        "room_beds": {"type": "array", "items": {"type": "integer", "exclusiveMinimum": 0}},
        "true_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "prior_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "margin": {"type": "number", "minimum": 0},
    },
    "required": ["id", "standard_capacity", "room_beds"],
}

LOS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "knots": {"type": "array", "items": {"type": "number"}},
        "survival": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["knots", "survival"],
}

STUDY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "hospitals": {"type": "array", "items": HOSPITAL_SCHEMA, "minItems": 1},
        "los": LOS_SCHEMA,
        "rate_curve": {
            "anyOf": [{"type": "null"}, {"type": "array", "items": {"type": "number", "minimum": 0}}]
        },
        "warmup_days": {"type": "integer", "minimum": 10},
        "study_days": {"type": "integer", "exclusiveMinimum": 0},
        "replications": {"type": "integer", "exclusiveMinimum": 0},
        "scenarios_per_day": {"type": "integer", "exclusiveMinimum": 0},
        "lookahead": {"type": "integer", "minimum": 3},
        "seed": {"type": "integer", "minimum": 0},
        "rule": RULE_SCHEMA,
    },
    "required": ["hospitals", "rule"],
}

SNAPSHOT_HOSPITAL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string"},
        "standard_capacity": {"type": "integer", "exclusiveMinimum": 0},
        "room_beds": {"type": "array", "items": {"type": "integer", "exclusiveMinimum": 0}},
        "open": {"type": "array", "items": {"type": "integer", "enum": [0, 1]}},
        "sched1": {"type": "array", "items": {"type": "integer", "enum": [0, 1]}},
        "sched2": {"type": "array", "items": {"type": "integer", "enum": [0, 1]}},
        "attained_los": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "margin": {"type": "number", "minimum": 0},
    },
    "required": ["id", "standard_capacity", "room_beds", "attained_los"],
}

SNAPSHOT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "day": {"type": "integer", "minimum": 0},
        "hospitals": {"type": "array", "items": SNAPSHOT_HOSPITAL_SCHEMA, "minItems": 1},
        "fractions": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "priors": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "autonomous_totals": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "arrival_total": {"type": "number", "minimum": 0},
            },
            "required": ["priors"],
        },
        "los": LOS_SCHEMA,
        "rates": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "arrival_history": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "rate_mode": {"enum": ["point", "upper90"]},
        "lookahead": {"type": "integer", "minimum": 3},
        "scenario_count": {"type": "integer", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["hospitals", "fractions"],
}

RECOMMEND_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"state": SNAPSHOT_SCHEMA, "rule": RULE_SCHEMA},
    "required": ["state", "rule"],
}


class ConfigError(ValueError):
    """Configuration or snapshot document rejected."""


def _validate(doc, schema, what):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid {what}: {exc.message}") from exc


def rule_from_json(doc) -> RuleConfig:
    _validate(doc, RULE_SCHEMA, "rule block")
    kind = doc["type"]
    weights = None
    if "preset" in doc:
        weights = WEIGHT_PRESETS[doc["preset"]]
    elif "weights" in doc:
        w = doc["weights"]
        weights = CostWeights(w["alpha"], w["beta"], w["gamma"], w["delta"], w["epsilon"])
    kwargs = {}
    for key in ("statistic", "quantile", "designated", "rate_mode", "rel_gap"):
        if key in doc:
            kwargs[key] = doc[key]
    if "split" in doc:
        kwargs["split"] = tuple(doc["split"])
    return RuleConfig(kind=kind, weights=weights, **kwargs)


def rule_to_json(rule: RuleConfig) -> dict:
    out = {"type": rule.kind}
    if rule.weights is not None:
        for name, preset in WEIGHT_PRESETS.items():
            if preset == rule.weights:
                out["preset"] = name
                break
        else:
            out["weights"] = {
                "alpha": rule.weights.alpha,
                "beta": rule.weights.beta,
                "gamma": rule.weights.gamma,
                "delta": rule.weights.delta,
                "epsilon": rule.weights.epsilon,
            }
    if rule.kind == "SP_DET":
        out["statistic"] = rule.statistic
    if rule.kind in ("IH", "PU"):
        out["quantile"] = rule.quantile
    if rule.kind == "PU":
        out["designated"] = rule.designated
        out["split"] = list(rule.split)
    if rule.rate_mode != "point":
        out["rate_mode"] = rule.rate_mode
    if rule.rel_gap != 1e-4:
        out["rel_gap"] = rule.rel_gap
    return out


def study_from_json(doc) -> SimConfig:
    _validate(doc, STUDY_SCHEMA, "study config")
    hospitals = doc["hospitals"]
    margins = tuple(h.get("margin", 2.0) for h in hospitals)
    rule = rule_from_json(doc["rule"])
    if rule.kind in ("IH", "PU"):
        from dataclasses import replace as _replace

        rule = _replace(rule, margins=margins)
    los = LosDistribution.from_json(doc["los"]) if "los" in doc else DEFAULT_LOS
    curve = doc.get("rate_curve")
    return SimConfig(
        hospital_ids=tuple(h["id"] for h in hospitals),
        standard_capacity=tuple(h["standard_capacity"] for h in hospitals),
        room_beds=tuple(tuple(h["room_beds"]) for h in hospitals),
        true_fractions=tuple(h.get("true_fraction", 0.0) for h in hospitals),
        prior_fractions=tuple(h.get("prior_fraction", 0.0) for h in hospitals),
        rule=rule,
        los=los,
        rate_curve=RateCurve(tuple(curve)) if curve else None,
        warmup_days=doc.get("warmup_days", 60),
        study_days=doc.get("study_days", 91),
        replications=doc.get("replications", 250),
        scenarios_per_day=doc.get("scenarios_per_day", 100),
        lookahead=doc.get("lookahead", 5),
        seed=doc.get("seed", 20211001),
    )


def study_to_json(config: SimConfig) -> dict:
    hospitals = []
    for h in range(config.n_hospitals):
        entry = {
            "id": config.hospital_ids[h],
            "standard_capacity": config.standard_capacity[h],
            "room_beds": list(config.room_beds[h]),
            "true_fraction": config.true_fractions[h],
            "prior_fraction": config.prior_fractions[h],
        }
        if h < len(config.rule.margins):
            entry["margin"] = config.rule.margins[h]
        hospitals.append(entry)
    return {
        "hospitals": hospitals,
        "los": config.los.to_json(),
        "rate_curve": list(config.rate_curve.daily_rates) if config.rate_curve else None,
        "warmup_days": config.warmup_days,
        "study_days": config.study_days,
        "replications": config.replications,
        "scenarios_per_day": config.scenarios_per_day,
        "lookahead": config.lookahead,
        "seed": config.seed,
        "rule": rule_to_json(config.rule),
    }


def load_study_config(path) -> SimConfig:
    with open(path) as fh:
        return study_from_json(json.load(fh))


def bundled_config_path(name: str = "euregio.json"):
    return resources.files("wardplan.data").joinpath(name)


def recommend_from_request(doc: dict) -> dict:
    """One decision epoch from a snapshot: scenarios, rule, plans, fan chart.

    Deterministic given the request (including its seed).  The same function
    backs the CLI command and the HTTP endpoint so their outputs coincide.
    """
    _validate(doc, RECOMMEND_SCHEMA, "recommend request")
    state = doc["state"]
    rule = rule_from_json(doc["rule"])
    hospitals = state["hospitals"]
    H = len(hospitals)

    ledgers = []
    rosters = []
    for h in hospitals:
        n = len(h["room_beds"])
        open_prev = tuple(h.get("open", [0] * n))
        sched1 = tuple(h.get("sched1", [0] * n))
        sched2 = tuple(h.get("sched2", [0] * n))
        if not (len(open_prev) == len(sched1) == len(sched2) == n):
            raise ConfigError(f"hospital {h['id']}: room flag arrays must match room count")
        ledgers.append(
            HospitalRooms(
                standard_capacity=h["standard_capacity"],
                room_beds=tuple(h["room_beds"]),
                open_prev=open_prev,
                sched1_prev=sched1,
                sched2_prev=sched2,
            )
        )
        rosters.append(WardRoster(attained_los=tuple(h["attained_los"])))
    ledger = RoomLedger(hospitals=tuple(ledgers))

    fr = state["fractions"]
    fractions = FractionEstimate(
        priors=tuple(fr["priors"]),
        autonomous_totals=tuple(fr.get("autonomous_totals", [0.0] * H)),
        arrival_total=fr.get("arrival_total", 0.0),
    )
    if len(fractions.priors) != H:
        raise ConfigError("fractions must cover every hospital")

    los = LosDistribution.from_json(state["los"]) if "los" in state else DEFAULT_LOS
    s = state.get("lookahead", 5)
    count = state.get("scenario_count", 100)
    seed = state.get("seed", 0)
    mode = state.get("rate_mode", "point")
    if "rates" in state:
        if len(state["rates"]) < s:
            raise ConfigError("rates must cover the lookahead horizon")
        rates = RateCurve(tuple(state["rates"][:s]))
    elif "arrival_history" in state and len(state["arrival_history"]) >= 10:
        fit = fit_richards(np.asarray(state["arrival_history"], dtype=float))
        rates = predict_rate(fit, len(state["arrival_history"]), s, mode=mode)
    else:
        raise ConfigError("snapshot needs either rates or at least 10 days of arrival history")

    scenarios = generate_scenarios(tuple(rosters), fractions, rates, los, s, count, seed)
    if rule.kind == "SP_DET":
        scenarios = collapse_scenarios(scenarios, rule.statistic)
    assignable = tuple(fractions.assignable_share * r for r in rates.daily_rates[:s])
    pmf = assign_count_pmf(assignable[0])
    ctx = DecisionContext(
        day=state.get("day", 0),
        ledger=ledger,
        occupancy=tuple(r.occupancy for r in rosters),
        scenarios=scenarios,
        pmf=pmf,
        assignable_rates=assignable,
    )
    margins = tuple(h.get("margin", 2.0) for h in hospitals)
    if rule.kind in ("SP", "SP_DET"):
        decision = sp_decide(ctx, rule.weights, rel_gap=rule.rel_gap, time_limit=10.0)
    elif rule.kind == "IH":
        decision = ih_decide(ctx, quantile=rule.quantile, margins=margins)
    else:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
        decision = pu_decide(
            ctx, rng, designated=rule.designated, split=rule.split,
            quantile=rule.quantile, margins=margins,
        )

    quant = {
        q: scenarios.occupancy_quantile_grid(q).tolist() for q in (0.1, 0.5, 0.9)
    }
    return {
        "decision": decision.to_json(),
        "capacity_schedule": decision.room_plan.capacity_schedule().tolist(),
        "fan": {
            "hospitals": [h["id"] for h in hospitals],
            "p10": quant[0.1],
            "p50": quant[0.5],
            "p90": quant[0.9],
        },
        "pmf": {"rate": pmf.rate, "truncation": pmf.truncation},
        "seed": seed,
    }


def render_recommendation(doc: dict) -> str:
    """Canonical serialization shared by the CLI and the HTTP endpoint."""
    return json.dumps(doc, indent=2, sort_keys=True)

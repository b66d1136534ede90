"""Command-line workflows: synth, train, eval, plan, rollout, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .actor import score_action
from .cohort import (
    Cohort,
    SyntheticDynamics,
    export_cohort,
    generate_cohort,
    import_cohort,
    visit_pairs,
)
from .grammar import TherapyAction, ValidationError
from .losses import LossWeights
from .metrics import c_index, km_curve, km_export_csv, log_rank
from .planner import PlanConfig, Schedule, inverse_evaluate, rollout
from .policy import DEFAULT_CONSTRAINTS, ConstraintSet, RuleBasedAgent, format_feedback
from .service import ServiceConfig, serve
from .training import (
    TrainConfig,
    evaluate_pairs,
    load_checkpoint,
    save_checkpoint,
    split_patients,
    train,
)


def _cmd_synth(args) -> int:
    dynamics = SyntheticDynamics(noise_scale=args.noise)
    cohort = generate_cohort(args.n, dynamics, seed=args.seed)
    export_cohort(cohort, args.out)
    print(f"wrote {len(cohort.records)} patients to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cohort = import_cohort(args.cohort)
    if args.config:
        doc = json.loads(Path(args.config).read_text("utf-8"))
        weights = doc.pop("weights", None)
        if weights is not None:
            doc["weights"] = LossWeights.from_dict(weights)
        cfg = TrainConfig(**doc)
    else:
        cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    model, history = train(cohort, cfg)
    save_checkpoint(model, args.out)
    if args.history:
        Path(args.history).write_text(json.dumps(history, indent=2, sort_keys=True), "utf-8")
    val = history["validation"]
    print(f"checkpoint written to {args.out}")
    print(
        f"validation: latent_l1={val.get('latent_l1', float('nan')):.4f} "
        f"c_index={val.get('c_index', float('nan')):.4f} over {val.get('n_pairs', 0)} pairs"
    )
    return 0


def _eval_report(cohort: Cohort, model) -> dict:
    seed = int(model.metadata.get("train_config", {}).get("seed", 0))
    _, val_ids = split_patients(cohort, (4, 1), seed)
    val = cohort.subset(val_ids)
    pairs = [p for r in val.records for p in visit_pairs(r)]
    metrics = evaluate_pairs(pairs, model)
    risks = []
    for rec in val.records:
        last_pair = visit_pairs(rec)[-1]
        out = score_action(
            last_pair.z_pre, rec.profile, last_pair.dt_days, last_pair.action, model
        )
        risks.append(out.risk)
    risks = np.asarray(risks)
    times = np.asarray([r.label.time_days for r in val.records])
    events = np.asarray([r.label.event for r in val.records])
    median = float(np.median(risks))
    high = risks > median
    report = {
        "validation_patients": len(val.records),
        "pair_metrics": metrics,
        "risk_median": median,
    }
    if high.any() and (~high).any():
        stat, p = log_rank([(times[high], events[high]), (times[~high], events[~high])])
        report["log_rank"] = {"statistic": stat, "p_value": p}
        report["strata"] = {
            "high_risk_n": int(high.sum()),
            "low_risk_n": int((~high).sum()),
        }
    return report


def _cmd_eval(args) -> int:
    cohort = import_cohort(args.cohort)
    model = load_checkpoint(args.checkpoint)
    report = _eval_report(cohort, model)
    if args.km_out:
        seed = int(model.metadata.get("train_config", {}).get("seed", 0))
        _, val_ids = split_patients(cohort, (4, 1), seed)
        val = cohort.subset(val_ids)
        times = np.asarray([r.label.time_days for r in val.records])
        events = np.asarray([r.label.event for r in val.records])
        km_export_csv(km_curve(times, events), args.km_out)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        pm = report["pair_metrics"]
        print(f"validation patients : {report['validation_patients']}")
        print(f"visit pairs         : {pm['n_pairs']}")
        print(f"latent L1           : {pm['latent_l1']:.6f}")
        print(f"C-index             : {pm['c_index']:.6f}")
        if "brier" in pm:
            print(f"Brier               : {pm['brier']:.6f}")
        if "log_rank" in report:
            lr = report["log_rank"]
            print(f"log-rank chi2       : {lr['statistic']:.4f}")
            print(f"log-rank p          : {lr['p_value']:.6f}")
    return 0


def _load_patient(path: str):
    doc = json.loads(Path(path).read_text("utf-8"))
    from .cohort import _record_from_dict

    return _record_from_dict(doc, 1)


def _cmd_plan(args) -> int:
    model = load_checkpoint(args.checkpoint)
    record = _load_patient(args.patient)
    constraints = DEFAULT_CONSTRAINTS
    if args.constraints:
        constraints = ConstraintSet.from_dict(json.loads(Path(args.constraints).read_text("utf-8")))
    agent = RuleBasedAgent(seed=args.seed, constraints=constraints)
    cfg = PlanConfig(max_iterations=args.k, proposals_per_iteration=args.m, seed=args.seed)
    result = inverse_evaluate(
        record.final_visit, record.profile, args.dt, agent, model, constraints, cfg
    )
    print(f"best action : {result.best_action.to_dict()}")
    print(f"best risk   : {result.best_risk:.6f}")
    print(f"best p_1y   : {result.best_p_1y:.6f}")
    print(f"iterations  : {result.iterations_run}")
    print(f"candidates  : {result.candidate_count}")
    print()
    print(format_feedback(result.feedback))
    return 0


def _cmd_rollout(args) -> int:
    model = load_checkpoint(args.checkpoint)
    record = _load_patient(args.patient)
    doc = json.loads(Path(args.schedule).read_text("utf-8"))
    schedule = Schedule.from_pairs(
        [(float(s["t_days"]), TherapyAction.from_dict(s["action"])) for s in doc["steps"]]
    )
    trajectory = rollout(record.final_visit, record.profile, schedule, model)
    print(f"{'t_days':>8}  {'p_1y':>8}  {'risk':>9}  action")
    for point in trajectory:
        print(
            f"{point.t_days:8.1f}  {point.p_1y:8.4f}  {point.risk:9.4f}  "
            f"{point.action.to_dict()}"
        )
    return 0


def _cmd_serve(args) -> int:
    cfg = ServiceConfig.from_file(args.config)
    serve(cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oncoplan",
        description="Latent disease-evolution modeling, survival scoring, and treatment planning.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate and export a synthetic cohort")
    p.add_argument("--n", type=int, required=True, help="number of patients (>= 5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="transition noise scale")
    p.add_argument("--out", required=True, help="output cohort file (jsonl)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model on a cohort file")
    p.add_argument("--cohort", required=True)
    p.add_argument("--config", help="JSON train-config document")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", help="optional loss-history JSON output")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="survival metrics on the validation split")
    p.add_argument("--cohort", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", action="store_true", help="emit a JSON report")
    p.add_argument("--km-out", help="export the validation KM curve as CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("plan", help="iterative minimum-risk action search for one patient")
    p.add_argument("--patient", required=True, help="patient record JSON file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=int, default=3, help="max refinement iterations")
    p.add_argument("--m", type=int, default=8, help="proposals per iteration")
    p.add_argument("--dt", type=float, default=90.0, help="planning horizon in days")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constraints", help="JSON constraint table")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("rollout", help="project a treatment schedule for one patient")
    p.add_argument("--patient", required=True)
    p.add_argument("--schedule", required=True, help='JSON: {"steps": [{"t_days": ..., "action": {...}}]}')
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_rollout)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # config / numeric / policy errors carry their message
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

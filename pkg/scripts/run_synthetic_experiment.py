"""End-to-end synthetic experiment: generate, train, evaluate, plan.

Mirrors the CLI workflow as a single script; writes artifacts under
``runs/<tag>/``.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from oncoplan.cohort import (
    DEFAULT_PLAN_HORIZON,
    SyntheticDynamics,
    export_cohort,
    generate_cohort,
    true_optimal_action,
)
from oncoplan.metrics import exact_match_rate, micro_prf1
from oncoplan.planner import PlanConfig, inverse_evaluate
from oncoplan.policy import DEFAULT_CONSTRAINTS, RuleBasedAgent
from oncoplan.training import TrainConfig, save_checkpoint, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tag", default="synthetic")
    parser.add_argument("--patients", type=int, default=200)
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--holdout", type=int, default=50)
    args = parser.parse_args()

    out = Path("runs") / args.tag
    out.mkdir(parents=True, exist_ok=True)
    dynamics = SyntheticDynamics()

    cohort = generate_cohort(args.patients, dynamics, seed=args.seed)
    export_cohort(cohort, out / "cohort.jsonl")
    print(f"[1/4] cohort: {args.patients} patients -> {out / 'cohort.jsonl'}")

    t0 = time.time()
    model, history = train(cohort, TrainConfig(epochs=args.epochs, seed=args.seed))
    save_checkpoint(model, out / "checkpoint.json")
    (out / "history.json").write_text(json.dumps(history, indent=2, sort_keys=True))
    val = history["validation"]
    print(
        f"[2/4] trained in {time.time() - t0:.0f}s: "
        f"val latent L1={val['latent_l1']:.4f} C-index={val['c_index']:.4f}"
    )

    holdout = generate_cohort(args.holdout, dynamics, seed=args.seed + 1000)
    pairs = []
    hits = 0
    t0 = time.time()
    for i, record in enumerate(holdout.records):
        oracle = true_optimal_action(record, dynamics)
        result = inverse_evaluate(
            record.final_visit,
            record.profile,
            DEFAULT_PLAN_HORIZON,
            RuleBasedAgent(seed=i),
            model,
            DEFAULT_CONSTRAINTS,
            PlanConfig(seed=i),
        )
        pairs.append((result.best_action, oracle))
        hits += result.best_action == oracle
    precision, recall, f1 = micro_prf1(pairs)
    print(
        f"[3/4] planner vs oracle on {args.holdout} held-out patients "
        f"({time.time() - t0:.0f}s): exact={hits}/{args.holdout} "
        f"micro P/R/F1={precision:.3f}/{recall:.3f}/{f1:.3f}"
    )

    report = {
        "validation": val,
        "planner": {
            "holdout": args.holdout,
            "exact_match": hits / args.holdout,
            "exact_match_secondary": exact_match_rate(pairs),
            "micro_precision": precision,
            "micro_recall": recall,
            "micro_f1": f1,
        },
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"[4/4] report -> {out / 'report.json'}")


if __name__ == "__main__":
    main()

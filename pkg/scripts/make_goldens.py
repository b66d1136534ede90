"""Regenerate the committed golden fixtures under tests/golden/.

Everything here is deterministic; rerunning must reproduce the committed
bytes unless an intentional behavior change occurred (in which case the
goldens are re-committed alongside it).
"""

from __future__ import annotations

import json
from pathlib import Path

from oncoplan.actor import ActorConfig
from oncoplan.cli import _eval_report
from oncoplan.cohort import SyntheticDynamics, export_cohort, generate_cohort, _record_to_dict
from oncoplan.training import TrainConfig, save_checkpoint, train

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"
FRONTEND_FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    dynamics = SyntheticDynamics(latent_tokens=2, width=8)
    cohort = generate_cohort(12, dynamics, seed=5)
    export_cohort(cohort, GOLDEN / "cohort_small.jsonl")

    actor_cfg = ActorConfig(
        depth_predictor=1,
        depth_survival=1,
        latent_tokens=2,
        width=8,
        embed_dim=16,
        clinical_dim=16,
        temporal_dim=16,
    )
    model, history = train(cohort, TrainConfig(epochs=4, batch_size=8, seed=1), actor_cfg)
    save_checkpoint(model, GOLDEN / "checkpoint_small.json")

    report = _eval_report(cohort, model)
    (GOLDEN / "eval_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", "utf-8"
    )

    # demo patient for the frontend (full-size world, matches default service dims)
    FRONTEND_FIXTURES.mkdir(parents=True, exist_ok=True)
    demo = generate_cohort(5, SyntheticDynamics(), seed=11).records[0]
    (FRONTEND_FIXTURES / "demo_patient.json").write_text(
        json.dumps(_record_to_dict(demo), indent=2, sort_keys=True) + "\n", "utf-8"
    )
    print(f"golden fixtures written under {GOLDEN} and {FRONTEND_FIXTURES}")


if __name__ == "__main__":
    main()

"""Joint end-to-end optimization of the latent predictor and survival heads.

Training minimizes the weighted sum of latent L1, soft-label contrastive,
Brier, and Cox objectives over minibatches of consecutive-visit pairs,
split at the patient level. Checkpoints are single JSON documents whose
load reproduces every forward output bitwise.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .actor import ActorConfig, ActorModel, Tensor, init_actor_params, predict_post, predict_survival
from .autodiff import ConfigError, NumericError, Tape, backward, concat_rows, reshape
from .cohort import Cohort, VisitPair, visit_pairs
from .encoders import HashTextEmbedder, TemporalConfig, embed_action, embed_clinical, encode_time
from .losses import LossWeights, brier, cox_partial, latent_l1, soft_contrastive, total_loss
from .metrics import UndefinedMetricError, c_index

__all__ = [
    "CHECKPOINT_FORMAT_VERSION",
    "TrainConfig",
    "split_patients",
    "init_adam_state",
    "adaptive_step",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_hash",
    "evaluate_pairs",
]

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    # optional cosine decay of the learning rate to this fraction (1.0 = constant)
    final_lr_fraction: float = 1.0
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    # With survival heads reading the observed post-treatment latent during
    # training (the default), the ranking losses cannot co-opt the predicted
    # latent as an unconstrained risk channel; scoring always runs through
    # the predicted latent either way. Set True for fully end-to-end
    # gradients into the predictor from the survival losses.
    survival_on_predicted: bool = False

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2: the contrastive loss needs pairs")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("moment decay rates must lie in [0, 1)")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["weights"] = self.weights.to_dict()
        return d


def split_patients(
    cohort: Cohort, ratio: tuple[int, int] = (4, 1), seed: int = 0
) -> tuple[list[str], list[str]]:
    """Disjoint patient-id lists; every visit pair of a patient stays on one side."""
    train_part, val_part = ratio
    if train_part < 1 or val_part < 1:
        raise ConfigError(f"split ratio parts must be >= 1, got {ratio}")
    ids = cohort.patient_ids()
    if len(ids) < train_part + val_part:
        raise ConfigError(
            f"cannot split {len(ids)} patients {train_part}:{val_part}; "
            f"need at least {train_part + val_part}"
        )
    rng = np.random.default_rng((seed, 0x5B117))
    order = list(ids)
    rng.shuffle(order)
    n_val = max(1, round(len(order) * val_part / (train_part + val_part)))
    val_ids = sorted(order[:n_val])
    train_ids = sorted(order[n_val:])
    assert not set(train_ids) & set(val_ids)
    return train_ids, val_ids


def init_adam_state(params: Mapping[str, np.ndarray]) -> dict:
    return {
        "step": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adaptive_step(
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: dict,
    config: TrainConfig,
    lr: float | None = None,
) -> dict[str, np.ndarray]:
    """Bias-corrected first/second-moment update, in place on ``params``.

    Weight decay is decoupled and skips gains/biases; ``lr`` overrides the
    configured rate for schedule-driven steps.
    """
    state["step"] += 1
    t = state["step"]
    rate = config.learning_rate if lr is None else lr
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t
    for name, p in params.items():
        g = np.asarray(grads[name])
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter {name} shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = state["m"][name]
        v = state["v"][name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        update = rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        leaf = name.rsplit(".", 1)[-1]
        decayable = not (leaf == "g" or leaf.startswith("b"))
        if config.weight_decay > 0.0 and decayable:
            update = update + rate * config.weight_decay * p
        params[name] = p - update
    return params


def _epoch_lr(config: TrainConfig, epoch: int) -> float:
    if config.epochs <= 1:
        return config.learning_rate
    lo = config.learning_rate * config.final_lr_fraction
    span = config.learning_rate - lo
    phase = math.pi * epoch / (config.epochs - 1)
    return lo + span * 0.5 * (1.0 + math.cos(phase))


def _batch_forward(
    batch: Sequence[VisitPair],
    params: Mapping[str, Tensor],
    model: ActorModel,
    weights: LossWeights,
    drug_cache: dict[str, np.ndarray],
    survival_on_predicted: bool = False,
):
    """Forward pass over one minibatch; returns (total, component floats)."""
    from .grammar import serialize_action

    h_clin_cache: dict[str, Tensor] = {}
    z_hats = []
    us = []
    p_list = []
    r_list = []
    for pair in batch:
        ck = pair.patient_id
        h_clin = h_clin_cache.get(ck)
        if h_clin is None:
            h_clin = embed_clinical(pair.profile, model.embedder, params)
            h_clin_cache[ck] = h_clin
        key = serialize_action(pair.action)
        u = drug_cache.get(key)
        if u is None:
            u = embed_action(pair.action, model.embedder)
            drug_cache[key] = u
        gamma = encode_time(pair.dt_days, model.temporal)
        z_hat = predict_post(Tensor(pair.z_pre.tokens), h_clin, gamma, u, params, model.config)
        z_surv = z_hat if survival_on_predicted else Tensor(pair.z_post.tokens)
        p_1y, risk, _ = predict_survival(Tensor(pair.z_pre.tokens), z_surv, params, model.config)
        z_hats.append(z_hat)
        us.append(u)
        p_list.append(p_1y)
        r_list.append(risk)

    l_latent = None
    for pair, z_hat in zip(batch, z_hats):
        term = latent_l1(z_hat, Tensor(pair.z_post.tokens))
        l_latent = term if l_latent is None else l_latent + term
    l_latent = l_latent * (1.0 / len(batch))
    l_con = soft_contrastive(z_hats, us, weights.tau1, weights.tau2)
    p_vec = reshape(concat_rows([reshape(p, (1, 1)) for p in p_list]), (len(batch),))
    r_vec = reshape(concat_rows([reshape(r, (1, 1)) for r in r_list]), (len(batch),))
    y = np.array([pair.one_year for pair in batch])
    valid = np.array([pair.one_year_valid for pair in batch], dtype=np.float64)
    l_brier = brier(p_vec, y, valid)
    times = np.array([pair.time_days for pair in batch])
    events = np.array([pair.event for pair in batch])
    l_cox = cox_partial(r_vec, times, events)
    total = total_loss(l_latent, l_con, l_brier, l_cox, weights)
    components = {
        "latent": l_latent.item(),
        "contrastive": l_con.item(),
        "brier": l_brier.item(),
        "cox": l_cox.item(),
        "total": total.item(),
    }
    return total, components


def evaluate_pairs(pairs: Sequence[VisitPair], model: ActorModel) -> dict:
    """Validation metrics on visit pairs: latent L1, C-index, Brier."""
    params = model.as_tensors()
    l1_values = []
    risks = []
    probs = []
    for pair in pairs:
        h_clin = embed_clinical(pair.profile, model.embedder, params)
        gamma = encode_time(pair.dt_days, model.temporal)
        u = embed_action(pair.action, model.embedder)
        z_hat = predict_post(Tensor(pair.z_pre.tokens), h_clin, gamma, u, params, model.config)
        p_1y, risk, _ = predict_survival(Tensor(pair.z_pre.tokens), z_hat, params, model.config)
        l1_values.append(latent_l1(z_hat, Tensor(pair.z_post.tokens)).item())
        risks.append(risk.item())
        probs.append(p_1y.item())
    times = np.array([p.time_days for p in pairs])
    events = np.array([p.event for p in pairs])
    y = np.array([p.one_year for p in pairs])
    valid = np.array([p.one_year_valid for p in pairs], dtype=bool)
    out = {
        "latent_l1": float(np.mean(l1_values)),
        "n_pairs": len(pairs),
    }
    try:
        out["c_index"] = c_index(np.array(risks), times, events)
    except UndefinedMetricError:
        out["c_index"] = None
    if valid.any():
        out["brier"] = float(np.mean((np.array(probs)[valid] - y[valid]) ** 2))
    return out


def train(
    cohort: Cohort,
    config: TrainConfig | None = None,
    actor_config: ActorConfig | None = None,
    split_ratio: tuple[int, int] = (4, 1),
) -> tuple[ActorModel, dict]:
    """End-to-end training; returns the trained model and the loss history.

    Deterministic under (cohort, config): the split, the shuffles, and the
    parameter trajectory depend only on the seeds.
    """
    config = config or TrainConfig()
    if actor_config is None:
        actor_config = ActorConfig(latent_tokens=cohort.latent_tokens, width=cohort.width)
    if (actor_config.latent_tokens, actor_config.width) != (cohort.latent_tokens, cohort.width):
        raise ConfigError(
            f"actor latent grid ({actor_config.latent_tokens}, {actor_config.width}) != "
            f"cohort ({cohort.latent_tokens}, {cohort.width})"
        )
    train_ids, val_ids = split_patients(cohort, split_ratio, config.seed)
    id_set = {r.patient_id for r in cohort.records}
    assert not set(train_ids) & set(val_ids) and set(train_ids) | set(val_ids) == id_set
    by_id = {r.patient_id: r for r in cohort.records}
    train_pairs = [p for pid in train_ids for p in visit_pairs(by_id[pid])]
    val_pairs = [p for pid in val_ids for p in visit_pairs(by_id[pid])]
    if not train_pairs:
        raise ConfigError("training split has no visit pairs")

    model = ActorModel(
        config=actor_config,
        params=init_actor_params(actor_config, config.seed),
        temporal=TemporalConfig(actor_config.temporal_dim),
        embedder=HashTextEmbedder(actor_config.embed_dim),
        metadata={"trained": False},
    )
    state = init_adam_state(model.params)
    drug_cache: dict[str, np.ndarray] = {}
    history: list[dict] = []
    skipped_no_event = 0

    for epoch in range(config.epochs):
        rng = np.random.default_rng((config.seed, epoch, 0xE90C))
        order = rng.permutation(len(train_pairs))
        epoch_components: list[dict] = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.size < 2:
                continue
            batch = [train_pairs[i] for i in idx]
            tape = Tape()
            params = model.as_tensors(tape)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                total, components = _batch_forward(
                    batch,
                    params,
                    model,
                    config.weights,
                    drug_cache,
                    config.survival_on_predicted,
                )
            skipped_no_event += sum(
                1 for w in caught if "no observed events" in str(w.message)
            )
            if not np.isfinite(components["total"]):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}"
                )
            grads = backward(tape, total)
            adaptive_step(model.params, grads, state, config, lr=_epoch_lr(config, epoch))
            epoch_components.append(components)
        mean = {
            k: float(np.mean([c[k] for c in epoch_components]))
            for k in epoch_components[0]
        }
        mean["epoch"] = epoch
        history.append(mean)

    validation = evaluate_pairs(val_pairs, model) if val_pairs else {}
    model.metadata.update(
        {
            "trained": True,
            "train_config": config.to_dict(),
            "train_patients": len(train_ids),
            "val_patients": len(val_ids),
            "final_losses": history[-1],
            "validation": validation,
            "cox_batches_without_events": skipped_no_event,
        }
    )
    return model, {
        "epochs": history,
        "validation": validation,
        "train_ids": train_ids,
        "val_ids": val_ids,
    }


# ---------------------------------------------------------------------------
# checkpoint serialization


def _model_document(model: ActorModel) -> dict:
    return {
        "kind": "model_checkpoint",
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "actor_config": model.config.to_dict(),
        "temporal": {"dim": model.temporal.dim},
        "embedder": {"dim": model.embedder.dim, "seed": model.embedder.seed},
        "params": {k: v.tolist() for k, v in sorted(model.params.items())},
        "metadata": model.metadata,
    }


def save_checkpoint(model: ActorModel, path: str | Path) -> None:
    path = Path(path)
    doc = _model_document(model)
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", "utf-8")


def load_checkpoint(path: str | Path) -> ActorModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not a valid checkpoint document: {e}") from None
    if doc.get("kind") != "model_checkpoint":
        raise ConfigError(f"{path}: not a model checkpoint")
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ConfigError(
            f"{path}: format version {version!r} unsupported "
            f"(reader supports {CHECKPOINT_FORMAT_VERSION})"
        )
    cfg = ActorConfig.from_dict(doc["actor_config"])
    params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
    return ActorModel(
        config=cfg,
        params=params,
        temporal=TemporalConfig(int(doc["temporal"]["dim"])),
        embedder=HashTextEmbedder(int(doc["embedder"]["dim"]), int(doc["embedder"]["seed"])),
        metadata=dict(doc.get("metadata", {})),
    )


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

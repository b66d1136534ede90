"""Disease-evolution model: post-treatment latent predictor + survival heads.

The latent predictor reads [latent tokens | clinical token | temporal token |
drug token] through pre-norm self-attention layers and predicts the *change*
to the latent tokens (residual form, so an all-zero model is the identity).
The survival predictor runs two cross-attention branches (pre->post and
post->pre), pools, and emits a one-year event probability and a risk score.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import (
    ConfigError,
    ShapeError,
    Tape,
    Tensor,
    add,
    attention,
    concat_rows,
    gelu,
    layer_norm,
    matmul,
    reshape,
    sigmoid,
    slice_rows,
    tensor_mean,
)
from .encoders import HashTextEmbedder, TemporalConfig, embed_action, embed_clinical, encode_time
from .grammar import ClinicalProfile, TherapyAction

__all__ = [
    "LatentState",
    "ActorConfig",
    "SurvivalOutput",
    "ActorModel",
    "init_actor_params",
    "zero_actor_params",
    "param_shapes",
    "predict_post",
    "predict_survival",
    "score_action",
    "transition",
]


@dataclass(frozen=True, eq=False)
class LatentState:
    """A patient's disease state as a token grid (tokens x width)."""

    tokens: np.ndarray
    timestamp: float | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.tokens, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"latent tokens must be a (L, w) grid with L,w >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("latent tokens contain non-finite entries")
        object.__setattr__(self, "tokens", arr)

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]

    def flat(self) -> np.ndarray:
        return self.tokens.reshape(-1)


@dataclass(frozen=True)
class ActorConfig:
    depth_predictor: int = 4
    depth_survival: int = 4
    latent_tokens: int = 4
    width: int = 16
    embed_dim: int = 64
    clinical_dim: int = 64
    temporal_dim: int = 64
    # context tokens carrying the drug embedding; more than one gives the
    # treatment description enough channel capacity next to the latent tokens
    drug_tokens: int = 4

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if int(value) < 1:
                raise ConfigError(f"actor config field {name} must be positive, got {value}")
        if self.temporal_dim % 2 != 0:
            raise ConfigError(f"temporal_dim must be even, got {self.temporal_dim}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ActorConfig":
        return cls(**{k: int(v) for k, v in d.items()})


@dataclass(frozen=True)
class SurvivalOutput:
    """One-year event probability and unbounded relative risk score."""

    p_1y: float
    risk: float

    def __post_init__(self):
        if not 0.0 <= self.p_1y <= 1.0:
            raise ValueError(f"p_1y must lie in [0, 1], got {self.p_1y}")
        if not np.isfinite(self.risk):
            raise ValueError(f"risk must be finite, got {self.risk}")


def _attn_block_names(prefix: str) -> list[str]:
    return [
        f"{prefix}.ln1.g",
        f"{prefix}.ln1.b",
        f"{prefix}.attn.wq",
        f"{prefix}.attn.bq",
        f"{prefix}.attn.wk",
        f"{prefix}.attn.bk",
        f"{prefix}.attn.wv",
        f"{prefix}.attn.bv",
        f"{prefix}.attn.wo",
        f"{prefix}.attn.bo",
        f"{prefix}.ln2.g",
        f"{prefix}.ln2.b",
        f"{prefix}.ff.w1",
        f"{prefix}.ff.b1",
        f"{prefix}.ff.w2",
        f"{prefix}.ff.b2",
    ]


def param_shapes(cfg: ActorConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every learnable tensor; the checkpoint layout."""
    w = cfg.width
    hidden = 4 * w
    shapes: dict[str, tuple[int, ...]] = {
        "clin_mlp.w1": (cfg.embed_dim, cfg.embed_dim),
        "clin_mlp.b1": (cfg.embed_dim,),
        "clin_mlp.w2": (cfg.embed_dim, cfg.clinical_dim),
        "clin_mlp.b2": (cfg.clinical_dim,),
        "proj.clinical.w": (cfg.clinical_dim, w),
        "proj.clinical.b": (w,),
        "proj.temporal.w": (cfg.temporal_dim, w),
        "proj.temporal.b": (w,),
        "proj.drug.w": (cfg.embed_dim, cfg.drug_tokens * w),
        "proj.drug.b": (cfg.drug_tokens * w,),
        "pred.out.w": (w, w),
        "pred.out.b": (w,),
        "surv.head.w1": (cfg.latent_tokens * w, w),
        "surv.head.b1": (w,),
        "surv.head.w2": (w, 2),
        "surv.head.b2": (2,),
    }

    def block(prefix: str, cross: bool) -> None:
        for name in _attn_block_names(prefix):
            leaf = name[len(prefix) + 1 :]
            if leaf.endswith((".g", ".b")) and leaf.startswith("ln"):
                shapes[name] = (w,)
            elif leaf in ("attn.wq", "attn.wk", "attn.wv", "attn.wo"):
                shapes[name] = (w, w)
            elif leaf.startswith("attn.b"):
                shapes[name] = (w,)
            elif leaf == "ff.w1":
                shapes[name] = (w, hidden)
            elif leaf == "ff.b1":
                shapes[name] = (hidden,)
            elif leaf == "ff.w2":
                shapes[name] = (hidden, w)
            elif leaf == "ff.b2":
                shapes[name] = (w,)
        if cross:
            shapes[f"{prefix}.lnkv.g"] = (w,)
            shapes[f"{prefix}.lnkv.b"] = (w,)

    for i in range(cfg.depth_predictor):
        block(f"pred.l{i}", cross=False)
    for branch in ("a", "b"):
        for i in range(cfg.depth_survival):
            block(f"surv.{branch}.l{i}", cross=True)
    return shapes


def init_actor_params(cfg: ActorConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded initialization. Readout/heads start at zero so the model begins
    as the identity transition with a neutral survival output.

    Projections fed by unit-norm embedding vectors use unit-variance weights
    (variance of W@u is sigma^2 * |u|^2), keeping context tokens on the same
    scale as latent tokens; token-space weights use 1/sqrt(fan_in).
    """
    rng = np.random.default_rng(seed)
    unit_norm_inputs = ("proj.clinical.w", "proj.drug.w", "clin_mlp.w1")
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if name.startswith(("pred.out.", "surv.head.w2", "surv.head.b2")):
            params[name] = np.zeros(shape)
        elif leaf == "g":
            params[name] = np.ones(shape)
        elif name in unit_norm_inputs:
            params[name] = rng.normal(0.0, 1.0, size=shape)
        elif len(shape) == 2:
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def zero_actor_params(cfg: ActorConfig) -> dict[str, np.ndarray]:
    return {name: np.zeros(shape) for name, shape in param_shapes(cfg).items()}


@dataclass
class ActorModel:
    """Bundle of config, parameters, and encoder settings used for scoring."""

    config: ActorConfig
    params: dict[str, np.ndarray]
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    embedder: HashTextEmbedder = field(default_factory=HashTextEmbedder)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = param_shapes(self.config)
        missing = sorted(set(expected) - set(self.params))
        extra = sorted(set(self.params) - set(expected))
        if missing or extra:
            raise ConfigError(f"parameter set mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if tuple(self.params[name].shape) != shape:
                raise ShapeError(
                    f"parameter {name} has shape {self.params[name].shape}, expected {shape}"
                )
        if self.embedder.dim != self.config.embed_dim:
            raise ConfigError(
                f"embedder dim {self.embedder.dim} != config embed_dim {self.config.embed_dim}"
            )
        if self.temporal.dim != self.config.temporal_dim:
            raise ConfigError(
                f"temporal dim {self.temporal.dim} != config temporal_dim {self.config.temporal_dim}"
            )
        self.metadata.setdefault("trained", False)

    @property
    def trained(self) -> bool:
        return bool(self.metadata.get("trained", False))

    @classmethod
    def fresh(cls, cfg: ActorConfig | None = None, seed: int = 0) -> "ActorModel":
        cfg = cfg or ActorConfig()
        return cls(
            config=cfg,
            params=init_actor_params(cfg, seed),
            temporal=TemporalConfig(cfg.temporal_dim),
            embedder=HashTextEmbedder(cfg.embed_dim),
            metadata={"trained": False, "init_seed": seed},
        )

    def as_tensors(self, tape: Tape | None = None) -> dict[str, Tensor]:
        if tape is None:
            return {k: Tensor(v) for k, v in self.params.items()}
        return {k: tape.param(k, v) for k, v in self.params.items()}


def _linear(x: Tensor, p: Mapping[str, Tensor], name: str) -> Tensor:
    return add(matmul(x, p[f"{name}.w"]), p[f"{name}.b"])


def _self_attn_block(x: Tensor, p: Mapping[str, Tensor], prefix: str) -> Tensor:
    h = layer_norm(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    q = add(matmul(h, p[f"{prefix}.attn.wq"]), p[f"{prefix}.attn.bq"])
    k = add(matmul(h, p[f"{prefix}.attn.wk"]), p[f"{prefix}.attn.bk"])
    v = add(matmul(h, p[f"{prefix}.attn.wv"]), p[f"{prefix}.attn.bv"])
    x = add(x, add(matmul(attention(q, k, v), p[f"{prefix}.attn.wo"]), p[f"{prefix}.attn.bo"]))
    h2 = layer_norm(x, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    ff = matmul(gelu(add(matmul(h2, p[f"{prefix}.ff.w1"]), p[f"{prefix}.ff.b1"])), p[f"{prefix}.ff.w2"])
    return add(x, add(ff, p[f"{prefix}.ff.b2"]))


def _cross_attn_block(x: Tensor, memory: Tensor, p: Mapping[str, Tensor], prefix: str) -> Tensor:
    hq = layer_norm(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    hkv = layer_norm(memory, p[f"{prefix}.lnkv.g"], p[f"{prefix}.lnkv.b"])
    q = add(matmul(hq, p[f"{prefix}.attn.wq"]), p[f"{prefix}.attn.bq"])
    k = add(matmul(hkv, p[f"{prefix}.attn.wk"]), p[f"{prefix}.attn.bk"])
    v = add(matmul(hkv, p[f"{prefix}.attn.wv"]), p[f"{prefix}.attn.bv"])
    x = add(x, add(matmul(attention(q, k, v), p[f"{prefix}.attn.wo"]), p[f"{prefix}.attn.bo"]))
    h2 = layer_norm(x, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    ff = matmul(gelu(add(matmul(h2, p[f"{prefix}.ff.w1"]), p[f"{prefix}.ff.b1"])), p[f"{prefix}.ff.w2"])
    return add(x, add(ff, p[f"{prefix}.ff.b2"]))


def predict_post(
    z_pre: Tensor,
    h_clin: Tensor,
    gamma_dt: np.ndarray,
    h_drug: np.ndarray,
    params: Mapping[str, Tensor],
    cfg: ActorConfig,
) -> Tensor:
    """Predicted post-treatment latent tokens; residual over ``z_pre``."""
    if z_pre.shape != (cfg.latent_tokens, cfg.width):
        raise ShapeError(
            f"latent tokens shape {z_pre.shape} != config ({cfg.latent_tokens}, {cfg.width})"
        )
    clin_tok = _linear(reshape(h_clin, (1, h_clin.size)), params, "proj.clinical")
    time_tok = _linear(Tensor(np.asarray(gamma_dt).reshape(1, -1)), params, "proj.temporal")
    drug_flat = _linear(Tensor(np.asarray(h_drug).reshape(1, -1)), params, "proj.drug")
    drug_toks = reshape(drug_flat, (cfg.drug_tokens, cfg.width))
    x = concat_rows([z_pre, clin_tok, time_tok, drug_toks])
    for i in range(cfg.depth_predictor):
        x = _self_attn_block(x, params, f"pred.l{i}")
    latent_out = slice_rows(x, 0, cfg.latent_tokens)
    delta = _linear(latent_out, params, "pred.out")
    return add(delta, z_pre)


def predict_survival(
    z_pre: Tensor,
    z_post: Tensor,
    params: Mapping[str, Tensor],
    cfg: ActorConfig,
) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (p_1y, risk, event_logit) as scalar tensors.

    Branch A attends pre->post, branch B post->pre (independent parameters);
    the mean-pooled branch outputs are summed before the prediction head.
    """
    for name, z in (("pre", z_pre), ("post", z_post)):
        if z.shape != (cfg.latent_tokens, cfg.width):
            raise ShapeError(
                f"{name} latent shape {z.shape} != config ({cfg.latent_tokens}, {cfg.width})"
            )
    xa, xb = z_pre, z_post
    for i in range(cfg.depth_survival):
        xa = _cross_attn_block(xa, z_post, params, f"surv.a.l{i}")
        xb = _cross_attn_block(xb, z_pre, params, f"surv.b.l{i}")
    # Branch outputs are summed token-wise, then flattened so the head sees
    # every latent coordinate (a linear risk functional of the state stays
    # representable); token-mean pooling would collapse that information.
    n = cfg.latent_tokens * cfg.width
    pooled = reshape(add(xa, xb), (1, n))
    h = gelu(add(matmul(pooled, params["surv.head.w1"]), params["surv.head.b1"]))
    out = add(matmul(h, params["surv.head.w2"]), params["surv.head.b2"])
    flat = reshape(out, (2,))
    logit = reshape(slice_rows(flat, 0, 1), ())
    risk = reshape(slice_rows(flat, 1, 2), ())
    return sigmoid(logit), risk, logit


def transition(
    z_pre: LatentState,
    profile: ClinicalProfile,
    dt: float,
    action: TherapyAction,
    model: ActorModel,
    params: Mapping[str, Tensor] | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """One conditioned step: returns (post-latent tokens, p_1y, risk) tensors."""
    p = params if params is not None else model.as_tensors()
    h_clin = embed_clinical(profile, model.embedder, p)
    gamma = encode_time(dt, model.temporal)
    h_drug = embed_action(action, model.embedder)
    z_hat = predict_post(Tensor(z_pre.tokens), h_clin, gamma, h_drug, p, model.config)
    p_1y, risk, _ = predict_survival(Tensor(z_pre.tokens), z_hat, p, model.config)
    return z_hat, p_1y, risk


def score_action(
    z_pre: LatentState,
    profile: ClinicalProfile,
    dt: float,
    action: TherapyAction,
    model: ActorModel,
) -> SurvivalOutput:
    """Deterministic composed scoring of one candidate action."""
    _, p_1y, risk = transition(z_pre, profile, dt, action, model)
    return SurvivalOutput(p_1y=p_1y.item(), risk=risk.item())

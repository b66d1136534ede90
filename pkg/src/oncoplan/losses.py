"""Training objectives: latent L1, soft-label contrastive, Brier, Cox.

The combined objective is ``lambda1 * latent + contrastive + lambda2 * brier
+ cox``. All losses are differentiable through the autodiff tape; expected
values for the closed-form cases are pinned in the test suite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .autodiff import (
    ConfigError,
    NumericError,
    ShapeError,
    Tensor,
    absolute,
    add,
    clamp_min,
    concat_rows,
    div,
    exp,
    log,
    masked_logsumexp,
    matmul,
    mul,
    neg,
    reshape,
    square,
    sqrt,
    stack_rows,
    sub,
    tensor_mean,
    tensor_sum,
    transpose,
)

__all__ = [
    "DomainError",
    "LossWeights",
    "SurvivalBatchLabels",
    "CoxDegenerateBatch",
    "latent_l1",
    "soft_contrastive",
    "brier",
    "cox_partial",
    "total_loss",
]

_LOG_FLOOR = 1e-12


class DomainError(ValueError):
    """Inputs outside a loss's domain (batch too small, zero vectors, ...)."""


class CoxDegenerateBatch(UserWarning):
    """Raised as a warning when a batch has no observed events."""


@dataclass(frozen=True)
class LossWeights:
    """Mixing coefficients and contrastive temperatures.

    The shipped temperatures keep the pair-summed contrastive gentle enough
    that it structures the latent space without overpowering the mean-scaled
    reconstruction term; sharp temperatures (e.g. 0.1) let it dominate and
    wreck latent fidelity at this scale.
    """

    lambda1: float = 5.0
    lambda2: float = 1.0
    tau1: float = 1.0
    tau2: float = 2.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ConfigError("temperatures must be strictly positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Mapping) -> "LossWeights":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class SurvivalBatchLabels:
    """Observed times (days), event indicators, and masked one-year labels.

    ``one_year`` is 1 when the event occurred within 365 days of the
    post-treatment visit and 0 when follow-up passed 365 days event-free;
    records censored before one year are masked out via ``one_year_valid``.
    """

    times: np.ndarray
    events: np.ndarray
    one_year: np.ndarray
    one_year_valid: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        e = np.asarray(self.events, dtype=np.int64)
        y = np.asarray(self.one_year, dtype=np.float64)
        m = np.asarray(self.one_year_valid, dtype=bool)
        if not (t.shape == e.shape == y.shape == m.shape) or t.ndim != 1:
            raise ShapeError(
                f"label arrays must share one 1-D shape, got {t.shape}/{e.shape}/{y.shape}/{m.shape}"
            )
        if np.any(t <= 0):
            raise DomainError("observed times must be strictly positive")
        if not np.all((e == 0) | (e == 1)):
            raise DomainError("event indicators must be 0 or 1")
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("one-year labels must be 0 or 1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "events", e)
        object.__setattr__(self, "one_year", y)
        object.__setattr__(self, "one_year_valid", m)

    def __len__(self) -> int:
        return self.times.shape[0]


def latent_l1(z_hat: Tensor, z: Tensor) -> Tensor:
    """Mean absolute difference over all token entries.

    Mean rather than sum, so the latent-loss weight transfers across latent
    sizes.
    """
    if z_hat.shape != z.shape:
        raise ShapeError(f"latent shapes differ: {z_hat.shape} vs {z.shape}")
    return tensor_mean(absolute(sub(z_hat, z)))


def _row_normalize(m: Tensor) -> Tensor:
    norms = sqrt(tensor_sum(square(m), axis=1, keepdims=True))
    if np.any(norms.data == 0.0):
        raise DomainError("cosine similarity undefined for zero vectors")
    return div(m, norms)


def soft_contrastive(
    z_hats: Sequence[Tensor],
    action_embeddings: Sequence[np.ndarray],
    tau1: float = 0.1,
    tau2: float = 0.1,
) -> Tensor:
    """Symmetric cross-entropy between action-text and predicted-latent
    similarity distributions (self-pairs excluded from both softmaxes).
    """
    b = len(z_hats)
    if b < 2 or len(action_embeddings) != b:
        raise DomainError(f"contrastive loss needs matched batches of size >= 2, got {b}")
    if tau1 <= 0 or tau2 <= 0:
        raise ConfigError("temperatures must be strictly positive")

    u = np.stack([np.asarray(e, dtype=np.float64).reshape(-1) for e in action_embeddings])
    u_norms = np.linalg.norm(u, axis=1, keepdims=True)
    if np.any(u_norms == 0.0):
        raise DomainError("cosine similarity undefined for zero vectors")
    u = u / u_norms
    p_logits = (u @ u.T) / tau1
    off_diag = 1.0 - np.eye(b)
    shifted = np.where(off_diag > 0, p_logits, -np.inf)
    p = np.exp(shifted - shifted.max(axis=1, keepdims=True))
    p = p / p.sum(axis=1, keepdims=True)
    p = np.maximum(p * off_diag, 0.0)

    z = _row_normalize(stack_rows(z_hats))
    q_logits = mul(matmul(z, transpose(z)), 1.0 / tau2)
    lse = masked_logsumexp(q_logits, off_diag, axis=1)
    log_q = sub(q_logits, reshape(lse, (b, 1)))
    log_q = clamp_min(log_q, np.log(_LOG_FLOOR))
    q = exp(log_q)

    mask = Tensor(off_diag)
    log_p = np.log(np.maximum(p, _LOG_FLOOR))
    term_pq = tensor_sum(mul(mul(Tensor(p), log_q), mask))
    term_qp = tensor_sum(mul(mul(q, Tensor(log_p)), mask))
    return neg(add(term_pq, term_qp))


def brier(p_1y: Tensor, y, valid=None) -> Tensor:
    """Squared error between event probability and the binary one-year label,
    averaged over validly labeled records (mask optional)."""
    yy = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if p_1y.data.ndim == 0:
        p_1y = reshape(p_1y, (1,))
    if p_1y.shape != yy.shape:
        raise ShapeError(f"probabilities shape {p_1y.shape} != labels {yy.shape}")
    if not np.all((yy == 0) | (yy == 1)):
        raise DomainError("one-year labels must be 0 or 1")
    if np.any(p_1y.data < 0.0) or np.any(p_1y.data > 1.0):
        raise DomainError("probabilities must lie in [0, 1]")
    mask = np.ones_like(yy) if valid is None else np.asarray(valid, dtype=np.float64)
    if mask.shape != yy.shape:
        raise ShapeError(f"validity mask shape {mask.shape} != labels {yy.shape}")
    n_valid = mask.sum()
    if n_valid == 0:
        return Tensor(0.0)
    sq = square(sub(p_1y, Tensor(yy)))
    return mul(tensor_sum(mul(sq, Tensor(mask))), 1.0 / n_valid)


def cox_partial(r: Tensor, times: np.ndarray, events: np.ndarray) -> Tensor:
    """Negative Cox partial log-likelihood (Breslow ties, stable log-sum-exp).

    The risk set at an event time includes every subject still under
    observation at that time, the event subject itself included. A batch with
    no events contributes zero and emits a :class:`CoxDegenerateBatch`
    warning.
    """
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    n = t.shape[0]
    if r.shape != (n,) or e.shape != (n,):
        raise ShapeError(f"risk/time/event lengths differ: {r.shape}, {t.shape}, {e.shape}")
    event_idx = np.nonzero(e == 1)[0]
    if event_idx.size == 0:
        warnings.warn("no observed events in batch; Cox term is zero", CoxDegenerateBatch)
        return Tensor(0.0)
    # Row k: risk-set mask for the k-th event (all subjects with T_j >= T_i).
    masks = (t[None, :] >= t[event_idx, None]).astype(np.float64)
    r_rows = concat_rows([reshape(r, (1, n))] * event_idx.size)
    lse = masked_logsumexp(r_rows, masks, axis=1)
    r_events = Tensor(np.eye(n)[event_idx]) @ reshape(r, (n, 1))
    return neg(tensor_sum(sub(reshape(r_events, (event_idx.size,)), lse)))


def total_loss(
    latent: Tensor | float,
    contrastive: Tensor | float,
    brier_term: Tensor | float,
    cox: Tensor | float,
    weights: LossWeights,
) -> Tensor:
    """Weighted sum of the four objectives."""
    parts = {"latent": latent, "contrastive": contrastive, "brier": brier_term, "cox": cox}
    out = None
    for name, part in parts.items():
        raw = part.data if isinstance(part, Tensor) else np.asarray(float(part))
        if not np.all(np.isfinite(raw)):
            raise NumericError(f"loss component {name!r} is not finite")
        t = part if isinstance(part, Tensor) else Tensor(raw)
        if name == "latent":
            t = mul(t, weights.lambda1)
        elif name == "brier":
            t = mul(t, weights.lambda2)
        out = t if out is None else add(out, t)
    return out

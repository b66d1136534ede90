"""Conditioning embeddings: elapsed time, clinical profile, and drug combo.

The text-embedding interface is pluggable; the shipped implementation is a
deterministic feature-hash embedder so that similarities are reproducible
across machines. Swapping in a pretrained language-model encoder only
requires implementing :class:`TextEmbedder`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Mapping, Protocol, runtime_checkable

import numpy as np

from .autodiff import ConfigError, Tape, Tensor, add, gelu, matmul, reshape
from .grammar import ClinicalProfile, TherapyAction, serialize_action, serialize_profile

__all__ = [
    "DomainError",
    "TemporalConfig",
    "encode_time",
    "TextEmbedder",
    "HashTextEmbedder",
    "embed_action",
    "embed_clinical",
]

# Fixed salt for the feature hash; changing it changes every embedding, so it
# is part of the checkpoint-compatibility contract.
HASH_SEED = 24001003


class DomainError(ValueError):
    """Input is outside the operation's domain (e.g. negative time gap)."""


@dataclass(frozen=True)
class TemporalConfig:
    """Sinusoidal time-gap embedding with log-spaced frequencies."""

    dim: int = 64

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2 != 0:
            raise ConfigError(f"temporal dim must be an even integer >= 2, got {self.dim}")

    def frequencies(self) -> np.ndarray:
        i = np.arange(1, self.dim // 2 + 1, dtype=np.float64)
        return 1.0 / np.power(10000.0, 2.0 * i / self.dim)


def encode_time(dt: float, cfg: TemporalConfig) -> np.ndarray:
    """Interleaved [sin(w_i dt), cos(w_i dt)] for i = 1..dim/2; dt in days."""
    if dt < 0:
        raise DomainError(f"time gap must be non-negative, got {dt}")
    w = cfg.frequencies()
    out = np.empty(cfg.dim, dtype=np.float64)
    out[0::2] = np.sin(w * dt)
    out[1::2] = np.cos(w * dt)
    return out


@runtime_checkable
class TextEmbedder(Protocol):
    """Deterministic text -> unit vector map of a fixed width."""

    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def _normalize_text(text: str) -> list[str]:
    return text.lower().split()


class HashTextEmbedder:
    """Feature-hash embedding over word unigrams and bigrams.

    Each token hashes (64-bit, salted) to a deterministic +-1/sqrt(dim) sign
    vector; the embedding is the mean over all token vectors, L2-normalized.
    """

    def __init__(self, dim: int = 64, seed: int = HASH_SEED):
        if dim < 1:
            raise ConfigError(f"embedder dim must be positive, got {dim}")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(
                token.encode("utf-8"), digest_size=8, salt=self.seed.to_bytes(8, "little")
            ).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
            vec = (rng.integers(0, 2, size=self.dim) * 2.0 - 1.0) / np.sqrt(self.dim)
            self._cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        words = _normalize_text(text)
        if not words:
            raise DomainError("cannot embed empty text")
        tokens = list(words)
        tokens.extend(f"{a}__{b}" for a, b in zip(words, words[1:]))
        acc = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            acc += self._token_vector(token)
        acc /= len(tokens)
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            # Astronomically unlikely for real text; still deterministic.
            raise DomainError("text hashed to the zero vector")
        return acc / norm


def embed_action(action: TherapyAction, embedder: TextEmbedder) -> np.ndarray:
    """Unit-norm drug-combo embedding: per-token hashing pooled by mean."""
    action.validate()
    return embedder.embed(serialize_action(action))


def embed_clinical(
    profile: ClinicalProfile,
    embedder: TextEmbedder,
    mlp_params: Mapping[str, Tensor],
    prefix: str = "clin_mlp",
) -> Tensor:
    """Profile text embedding refined by a trainable 2-layer perceptron.

    ``mlp_params`` supplies ``{prefix}.w1/b1/w2/b2`` as tape Tensors so the
    perceptron trains jointly with the rest of the model.
    """
    u = embedder.embed(serialize_profile(profile))
    x = Tensor(u.reshape(1, -1))
    h = gelu(add(matmul(x, mlp_params[f"{prefix}.w1"]), mlp_params[f"{prefix}.b1"]))
    out = add(matmul(h, mlp_params[f"{prefix}.w2"]), mlp_params[f"{prefix}.b2"])
    return reshape(out, (out.size,))

import numpy as np
import pytest

from oncoplan.actor import ActorConfig, ActorModel, init_actor_params, zero_actor_params
from oncoplan.cohort import SyntheticDynamics, generate_cohort
from oncoplan.encoders import HashTextEmbedder, TemporalConfig
from oncoplan.training import TrainConfig, train

TINY_ACTOR = ActorConfig(
    depth_predictor=1,
    depth_survival=1,
    latent_tokens=2,
    width=4,
    embed_dim=8,
    clinical_dim=8,
    temporal_dim=8,
)

SMALL_DYNAMICS = SyntheticDynamics(latent_tokens=2, width=8)


def make_tiny_model(seed: int = 0, zero: bool = False) -> ActorModel:
    params = zero_actor_params(TINY_ACTOR) if zero else init_actor_params(TINY_ACTOR, seed)
    return ActorModel(
        config=TINY_ACTOR,
        params=params,
        temporal=TemporalConfig(TINY_ACTOR.temporal_dim),
        embedder=HashTextEmbedder(TINY_ACTOR.embed_dim),
    )


@pytest.fixture(scope="session")
def small_cohort():
    """12-patient cohort on a reduced latent grid; fast to train against."""
    return generate_cohort(12, SMALL_DYNAMICS, seed=5)


@pytest.fixture(scope="session")
def small_trained(small_cohort):
    """A quickly trained small model plus its history (shared across tests)."""
    cfg = TrainConfig(epochs=4, batch_size=8, seed=1)
    actor_cfg = ActorConfig(
        depth_predictor=1,
        depth_survival=1,
        latent_tokens=2,
        width=8,
        embed_dim=16,
        clinical_dim=16,
        temporal_dim=16,
    )
    model, history = train(small_cohort, cfg, actor_cfg)
    return model, history

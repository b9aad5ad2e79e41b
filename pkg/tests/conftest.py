import numpy as np
import pytest
import torch

from movae import corpus, trainer
from movae.model import ConvSpec, ModelConfig, MoveModel
from movae.spectral import SpectralConfig

torch.set_num_threads(min(4, torch.get_num_threads()))


def small_model_config(variant="move_fpod", num_instruments=2, latent_dim=3):
    """32-bin configuration: full machinery, fast enough for unit tests."""
    return ModelConfig(
        variant=variant,
        n_bins=32,
        t_chunk=16,
        latent_dim=latent_dim,
        num_instruments=num_instruments,
        conv_layers=(ConvSpec(4, (4, 5), (3, 2), (2, 2)), ConvSpec(8, (4, 3), (1, 2), (0, 1))),
        fc_widths=(64, 32, 16),
        head_kernel=(3, 5),
        film_trunk=(8, 16, 32),
    )


@pytest.fixture(scope="session")
def small_scfg():
    return SpectralConfig(n_bins=32)


@pytest.fixture(scope="session")
def small_split(small_scfg):
    return corpus.build_corpus(
        corpus.default_instruments(2),
        small_scfg,
        split_seed=7,
        pitch_classes=range(0, 12, 3),
        octaves=(3, 4),
        duration_s=0.8,
    )


@pytest.fixture(scope="session")
def small_mcfg():
    return small_model_config()


@pytest.fixture(scope="session")
def small_trained(small_split, small_mcfg):
    """A lightly but genuinely trained small model (all objectives active)."""
    tcfg = trainer.TrainConfig(
        total_epochs=16,
        warmup_start_epoch=2,
        batch_size=64,
        mmd_target_batch=256,
        lr=1e-3,
        mmd_gate_fraction=0.25,
        cc_gate_fraction=0.5,
        seed=5,
    )
    ckpt, records = trainer.train(small_split, small_mcfg, tcfg)
    return ckpt, records


@pytest.fixture(scope="session")
def small_model(small_trained):
    return small_trained[0].build_model()


def make_untrained(mcfg, seed=123):
    model = MoveModel(mcfg)
    trainer.init_model_weights(model, seed)
    return model

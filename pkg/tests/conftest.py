"""Shared fixtures: a tiny trained run reused by CLI and training tests."""

import pytest

from devae.config import RunConfig
from devae.training import train

TINY_KW = dict(
    variant="devae",
    spaces=2,
    betas=(1.0, 40.0),
    data_spec="pos_x:4,pos_y:4,scale:2",
    arch_widths=(32,),
    latent_dim=4,
    iterations=200,
    batch_size=16,
    eval_every=50,
    lr=1e-3,
    track_samples=32,
    eval_samples=64,
    recon_samples=32,
    fv_votes=10,
)


@pytest.fixture(scope="session")
def trained_tiny_run(tmp_path_factory):
    """A 200-iteration run on a 32-image dataset; seconds, not minutes."""
    out = str(tmp_path_factory.mktemp("tiny_run"))
    config = RunConfig(seed=11, out_dir=out, **TINY_KW)
    result = train(config)
    return {
        "config": config,
        "result": result,
        "out": out,
        "checkpoint": result.checkpoint_path,
    }

import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from gfiqa.config import ModelConfig
from gfiqa.data import ScoredImage


@pytest.fixture
def tiny_config():
    """Miniature architecture: fast enough for gradient checks and oracles."""
    return ModelConfig(
        num_stages=2,
        stage_channels=(4, 8),
        reduction=2,
        num_attributes=6,
        bn_epsilon=1e-5,
        input_size=(16, 16, 3),
    )


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


def make_scored(domain_id, scores, seg=False):
    """ScoredImage list with synthetic paths (no files behind them)."""
    return [
        ScoredImage(
            stable_id=i,
            domain_id=domain_id,
            image_path=f"img_{domain_id}_{i:05d}.png",
            seg_path=f"img_{domain_id}_{i:05d}_seg.png" if seg else None,
            pseudo_mos=float(s),
        )
        for i, s in enumerate(scores)
    ]


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A real on-disk synthetic corpus, shared across the session.

    4 domains x 36 images at 32x32: big enough for loaders and spectra,
    small enough to render in a couple of seconds.
    """
    from gfiqa.synth import synth_corpus

    root = tmp_path_factory.mktemp("corpus")
    manifests = synth_corpus(
        root,
        n_per_domain=36,
        degradations=("blur", "noise", "block", "pixelate"),
        seed=7,
        image_size=32,
    )
    return root, manifests

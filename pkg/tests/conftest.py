import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))  # makes `oracles` importable

torch.set_flush_denormal(True)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def to_nchw(arr: np.ndarray) -> torch.Tensor:
    """(H, W, C) float array -> (1, C, H, W) tensor, keeping dtype."""
    t = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))
    return t.unsqueeze(0)


def to_hwc(t: torch.Tensor) -> np.ndarray:
    return t.squeeze(0).permute(1, 2, 0).cpu().numpy()


# ---------------------------------------------------------------------------
# shared trained models (expensive; trained once per session)

from interflow.train import TrainConfig, train  # noqa: E402


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """The full mid-timestep training run used by the quantitative checks."""
    out = tmp_path_factory.mktemp("desk_mid")
    cfg = TrainConfig(seed=0)
    result = train(cfg, out, quiet=True)
    return cfg, result


@pytest.fixture(scope="session")
def arb_run(tmp_path_factory):
    """Arbitrary-timestep training run (septuplet-derived t values)."""
    out = tmp_path_factory.mktemp("desk_arb")
    cfg = TrainConfig(seed=0, mode="arbitrary")
    result = train(cfg, out, quiet=True)
    return cfg, result

import numpy as np
import pytest

from neurochain import synth
from neurochain.spikes import SpikeTrain


@pytest.fixture(scope="session")
def small_dataset():
    """6-channel, 30 s synthetic dataset shared by decoder-level tests."""
    cfg = synth.SynthConfig(seed=42, channels=6, duration_s=30.0)
    trajectories = synth.gen_trajectories(cfg)
    trains = synth.gen_spikes(cfg)
    return cfg, trajectories, trains


def random_train(rng: np.random.Generator, channel: int = 0, n: int | None = None,
                 t_max: float = 10.0) -> SpikeTrain:
    if n is None:
        n = int(rng.integers(0, 60))
    times = np.sort(rng.uniform(0.0, t_max, size=n))
    times = np.unique(np.round(times, 7))
    return SpikeTrain(channel, times)

"""
Shared fixtures: seeded generators, reduced configurations and the synthetic tone corpus
"""

import numpy as np
import pytest

from src.core.config import AsdConfig, FramingConfig, ModelConfig, RuntimeSettings, TrainConfig
from src.core.gradcheck import gradcheck_config
from src.data.synthetic import generate_tone_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> AsdConfig:
    """13 frames × 8 mels, 3 classes"""
    return gradcheck_config()


def make_small_config(**train_overrides) -> AsdConfig:
    """1 s clips, 63 frames × 32 mels, 4 classes"""
    train = dict(lr=1e-3, epochs=30, batch_size=32, seed=0)
    train.update(train_overrides)
    return AsdConfig(
        framing=FramingConfig(clip_seconds=1.0, win_ms=32.0, n_mels=32),
        model=ModelConfig(
            embedding_dim=32,
            n_classes=4,
            wavegram_multiplier=8,
            stem_channels=16,
            bottlenecks="2:16:1:2,2:32:1:2",
            tail_channels=64,
        ),
        train=TrainConfig(**train),
    )


@pytest.fixture
def small_config() -> AsdConfig:
    return make_small_config()


@pytest.fixture
def runtime_settings(tmp_path) -> RuntimeSettings:
    return RuntimeSettings(log_level="WARNING", log_dir=str(tmp_path / "logs"), json_logs=False)


@pytest.fixture(scope="session")
def tone_corpus(tmp_path_factory):
    """Four machine IDs (two types), 50 training clips each, 10 normal + 10 anomalous test clips"""
    root = tmp_path_factory.mktemp("tones")
    return generate_tone_dataset(root)


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """Same layout with a handful of clips per ID, for fast CLI and loader checks"""
    root = tmp_path_factory.mktemp("mini_tones")
    return generate_tone_dataset(root, train_per_id=4, test_normal_per_id=2, test_anomaly_per_id=2)


@pytest.fixture(scope="session")
def small_config_factory():
    return make_small_config

"""
Tests for configuration parsing, runtime settings and logging setup
"""

import io
import json
import logging
from pathlib import Path

import pytest

from src.core.config import (
    AsdConfig,
    PoolingKind,
    RuntimeSettings,
    dump_config,
    load_config,
    parse_config_text,
)
from src.core.errors import ConfigError
from src.core.logging_config import configure_logging, epoch_log_writer


class TestParseConfig:
    def test_empty_text_gives_defaults(self):
        assert parse_config_text("") == AsdConfig()
        assert parse_config_text("# only a comment\n\n") == AsdConfig()

    def test_defaults(self):
        config = AsdConfig()
        assert config.framing.n_mels == 128
        assert config.framing.win_length == 1024
        assert config.framing.hop_length == 512
        assert config.framing.n_frames == 313
        assert config.model.embedding_dim == 128
        assert config.train.margin == pytest.approx(0.7)
        assert config.train.scale == pytest.approx(40.0)
        assert config.evaluation.max_fpr == pytest.approx(0.1)

    def test_values_and_aliases(self):
        config = parse_config_text(
            "h = 64   # embedding width\n"
            "batch=16\n"
            "lr=0\n"
            "global_pooling=avg\n"
            "use_attention=false\n"
            "f_max=\n"
        )
        assert config.model.embedding_dim == 64
        assert config.train.batch_size == 16
        assert config.train.lr == 0.0
        assert config.model.global_pooling == PoolingKind.AVG
        assert config.model.use_attention is False
        assert config.framing.f_max is None

    @pytest.mark.parametrize("text,key", [
        ("margin=1.8", "margin"),
        ("margin=1.5707963267948966", "margin"),
        ("scale=0", "scale"),
        ("n_mels=1", "n_mels"),
        ("batch_size=1", "batch"),
        ("max_fpr=1.5", "max_fpr"),
    ])
    def test_invalid_values(self, text, key):
        with pytest.raises(ConfigError) as excinfo:
            parse_config_text(text)
        assert excinfo.value.key == key

    @pytest.mark.parametrize("text", [
        "learning_rate=0.1",
        "lr=0.1\nlr=0.2",
        "h=64\nembedding_dim=64",
        "just some words",
        "f_max=9000",
        "bottlenecks=2:64:5",
        "attention_filters=16",
        "use_mel=false\nuse_wavegram=false",
        "epochs=many",
    ])
    def test_rejected_text(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_dump_parses_back(self, small_config):
        assert parse_config_text(dump_config(small_config)) == small_config
        assert parse_config_text(dump_config(AsdConfig())) == AsdConfig()

    def test_snapshot_round_trip(self, small_config):
        assert AsdConfig.from_snapshot(small_config.snapshot()) == small_config


class TestLoadConfig:
    def test_none_is_default(self):
        assert load_config(None) == AsdConfig()

    def test_file(self, tmp_path):
        path = tmp_path / "asd.conf"
        path.write_text("epochs=3\nn_mels=64\n")
        config = load_config(path)
        assert config.train.epochs == 3
        assert config.framing.n_mels == 64

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.conf")


class TestRuntimeSettings:
    def test_environment(self, monkeypatch):
        monkeypatch.setenv("ASD_LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("ASD_JSON_LOGS", "true")
        settings = RuntimeSettings()
        assert settings.log_level == "DEBUG"
        assert settings.json_logs is True

    def test_configure_logging_writes_file(self, runtime_settings):
        configure_logging(runtime_settings.model_copy(update={"log_level": "INFO"}))
        logging.getLogger("src.tests").info("hello from the test")
        for handler in logging.getLogger().handlers:
            handler.flush()
        log_file = Path(runtime_settings.log_dir) / "asd.log"
        assert "hello from the test" in log_file.read_text(encoding="utf-8")

    def test_epoch_log_writer_emits_json_lines(self):
        stream = io.StringIO()
        writer = epoch_log_writer(stream)
        writer.info("epoch", epoch=1, loss=0.5)
        writer.info("epoch", epoch=2, loss=0.25)
        lines = [json.loads(line) for line in stream.getvalue().splitlines()]
        assert [line["epoch"] for line in lines] == [1, 2]
        assert lines[1]["loss"] == 0.25
        assert lines[0]["event"] == "epoch"

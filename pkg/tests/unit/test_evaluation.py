"""
Tests for anomaly scoring, report aggregation/persistence and attention statistics
"""

from pathlib import Path

import numpy as np
import pytest
import yaml
from pydantic import ValidationError

from src.core.config import AttentionInit
from src.core.errors import ConfigError, DataError, LabelError
from src.core.tensor import no_grad
from src.data.dataset import ClipSet, DatasetRecord, Split
from src.dsp.container import read_container
from src.evaluation.attention import AttentionStatistics, attention_statistics, export_attention, relevant_bands
from src.evaluation.report import AnomalyRecord, evaluate_dataset, evaluate_scores, read_report, write_report
from src.evaluation.scoring import anomaly_score, classification_accuracy, predict_classes, score_clips
from src.modules.arcface import one_hot
from src.modules.detector import build_detector


def with_model(config, **updates):
    return config.model_copy(update={"model": config.model.model_copy(update=updates)})


def record(machine_type, machine_id, seq, anomalous, score):
    kind = "anomaly" if anomalous else "normal"
    return AnomalyRecord(clip_id=f"{machine_type}/test/{kind}_id_{machine_id}_{seq:08d}.wav",
                         machine_type=machine_type, machine_id=machine_id, score=score, is_anomaly=anomalous)


def machine_records(machine_type, machine_id, normal_scores, anomaly_scores):
    records = [record(machine_type, machine_id, i, False, s) for i, s in enumerate(normal_scores)]
    records += [record(machine_type, machine_id, i, True, s) for i, s in enumerate(anomaly_scores)]
    return records


def random_clips(config, n, rng, n_classes=3):
    records = [
        DatasetRecord(path=Path(f"{'anomaly' if i % 2 else 'normal'}_id_0{i % n_classes}_{i:08d}.wav"),
                      machine_type="fan", machine_id=f"0{i % n_classes}", split=Split.TEST, is_anomaly=bool(i % 2))
        for i in range(n)
    ]
    waveforms = 0.3 * rng.standard_normal((n, config.framing.n_samples)).astype(np.float32)
    return ClipSet(waveforms, records, np.arange(n, dtype=np.int64) % n_classes)


class TestReportAggregation:
    def test_oracle_scores(self):
        records = machine_records("fan", "00", [0.1, 0.2, 0.3], [0.8, 0.9])
        records += machine_records("pump", "00", [1.0, 2.0], [3.0, 4.0])
        report = evaluate_scores(records)
        assert report.overall.auc == pytest.approx(1.0)
        assert report.overall.pauc == pytest.approx(1.0)
        assert set(report.machine_types) == {"fan", "pump"}

    def test_inverted_scores(self):
        report = evaluate_scores(machine_records("fan", "00", [0.8, 0.9], [0.1, 0.2]))
        assert report.overall.auc == pytest.approx(0.0)
        assert report.overall.pauc == pytest.approx(0.0)

    def test_types_weighted_equally(self):
        records = machine_records("fan", "00", [0.1], [0.9])
        records += machine_records("fan", "02", [0.9], [0.1])
        records += machine_records("pump", "00", [0.1], [0.9])
        report = evaluate_scores(records)
        assert report.machine_types["fan"].auc == pytest.approx(0.5)
        assert report.machine_types["pump"].auc == pytest.approx(1.0)
        assert report.overall.auc == pytest.approx(0.75)

    def test_single_class_ids_are_excluded(self):
        records = machine_records("fan", "00", [0.1], [0.9])
        records += machine_records("fan", "04", [0.1, 0.2], [])
        report = evaluate_scores(records)
        missing = report.machine("fan", "04")
        assert missing.missing and missing.n_normal == 2 and missing.n_anomaly == 0
        assert report.machine_types["fan"].auc == pytest.approx(1.0)

    def test_no_usable_ids(self):
        report = evaluate_scores(machine_records("fan", "00", [0.1, 0.2], []))
        assert report.overall is None
        assert report.machine_types == {}

    def test_records_sorted_by_clip_id(self):
        records = machine_records("pump", "00", [0.1], [0.9]) + machine_records("fan", "00", [0.1], [0.9])
        report = evaluate_scores(reversed(records))
        assert [r.clip_id for r in report.records] == sorted(r.clip_id for r in records)

    def test_non_finite_score_rejected(self):
        with pytest.raises(ValidationError):
            record("fan", "00", 0, False, float("inf"))


class TestReportFile:
    def test_round_trip(self, tmp_path):
        records = machine_records("fan", "00", [0.125, 0.3], [0.7, 1 / 3])
        records += machine_records("pump", "02", [0.5], [])
        report = evaluate_scores(records, max_fpr=0.2)
        path = write_report(report, tmp_path / "out" / "report.tsv")
        assert read_report(path) == report

    def test_layout(self, tmp_path):
        report = evaluate_scores(machine_records("fan", "00", [0.25], [0.75]))
        lines = write_report(report, tmp_path / "r.tsv").read_text().splitlines()
        assert lines[0] == "# clip_id\tmachine_type\tmachine_id\tis_anomaly\tscore"
        assert lines[1] == "fan/test/anomaly_id_00_00000000.wav\tfan\t00\t1\t0.75"
        assert "# summary" in lines
        summary = yaml.safe_load("\n".join(lines[lines.index("# summary") + 1:]))
        assert summary["overall"] == {"auc": 1.0, "pauc": 1.0}

    def test_missing_summary(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("fan/test/a.wav\tfan\t00\t1\t0.5\n")
        with pytest.raises(DataError):
            read_report(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("fan/test/a.wav\tfan\t00\n# summary\nmax_fpr: 0.1\n")
        with pytest.raises(DataError):
            read_report(path)


class TestScoring:
    def test_scores_are_deterministic_and_consistent(self, tiny_config, rng):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        clips = random_clips(tiny_config, 5, rng)
        scores = score_clips(detector, clips, batch_size=2)
        assert scores.shape == (5,)
        assert np.all(scores >= 0)
        np.testing.assert_array_equal(scores, score_clips(detector, clips, batch_size=2))
        single = anomaly_score(detector, clips.waveforms[3], int(clips.labels[3]))
        assert single == pytest.approx(scores[3], rel=1e-5)
        vector = anomaly_score(detector, clips.waveforms[3], one_hot(clips.labels[3], 3)[0])
        assert vector == pytest.approx(single, rel=1e-6)

    def test_own_class_scores_lowest_for_the_predicted_class(self, tiny_config, rng):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        clip = 0.3 * rng.standard_normal(tiny_config.framing.n_samples)
        predicted = int(predict_classes(detector, clip[None, :])[0])
        scores = [anomaly_score(detector, clip, label) for label in range(3)]
        assert int(np.argmin(scores)) == predicted

    def test_scores_follow_the_angle_to_each_label(self, tiny_config, rng):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        detector.eval()
        for _ in range(5):
            clip = 0.3 * rng.standard_normal(tiny_config.framing.n_samples)
            with no_grad():
                angles = detector(clip[None, :]).angles.data[0]
            scores = [anomaly_score(detector, clip, label) for label in range(3)]
            for i in range(3):
                for j in range(3):
                    if angles[i] < angles[j] - 1e-3:
                        assert scores[i] < scores[j]

    def test_unknown_label(self, tiny_config, rng):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        with pytest.raises(LabelError):
            anomaly_score(detector, np.zeros(tiny_config.framing.n_samples), 7)

    def test_accuracy_with_mask(self, tiny_config, rng):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        clips = random_clips(tiny_config, 6, rng)
        hits = predict_classes(detector, clips.waveforms) == clips.labels
        mask = np.array([True, False, True, False, True, False])
        assert classification_accuracy(detector, clips) == pytest.approx(hits.mean())
        assert classification_accuracy(detector, clips, mask=mask) == pytest.approx(hits[mask].mean())

    def test_evaluate_dataset(self, tiny_config, rng):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        clips = random_clips(tiny_config, 6, rng)
        report = evaluate_dataset(detector, clips)
        assert len(report.records) == 6
        assert {m.machine_id for m in report.machines} == {"00", "01", "02"}
        with pytest.raises(DataError):
            evaluate_dataset(detector, ClipSet(clips.waveforms[:0], [], clips.labels[:0]))


class TestAttentionStatistics:
    def test_merged_batches_match_direct_statistics(self, tiny_config, rng):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        waveforms = 0.3 * rng.standard_normal((5, tiny_config.framing.n_samples))
        stats = attention_statistics(detector, waveforms, batch_size=2)
        with no_grad():
            maps = detector.features(waveforms).attention.data.astype(np.float64)
        assert stats.n_clips == 5
        assert stats.mean.shape == (tiny_config.framing.n_frames, tiny_config.framing.n_mels, 2)
        np.testing.assert_allclose(stats.mean, maps.mean(axis=0), atol=1e-6)
        np.testing.assert_allclose(stats.std, maps.std(axis=0), atol=1e-6)

    def test_single_clip_has_zero_spread(self, tiny_config, rng):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        stats = attention_statistics(detector, rng.standard_normal((1, tiny_config.framing.n_samples)))
        np.testing.assert_array_equal(stats.std, 0.0)

    def test_zero_initialised_attention_is_neutral(self, tiny_config, rng):
        detector = build_detector(with_model(tiny_config, attention_init=AttentionInit.ZERO), rng)
        stats = attention_statistics(detector, rng.standard_normal((3, tiny_config.framing.n_samples)))
        np.testing.assert_allclose(stats.mean, 0.5)
        np.testing.assert_allclose(stats.std, 0.0, atol=1e-12)
        assert relevant_bands(stats) == []

    def test_errors(self, tiny_config, rng):
        detector = build_detector(tiny_config, rng)
        with pytest.raises(DataError):
            attention_statistics(detector, np.zeros((0, tiny_config.framing.n_samples)))
        plain = build_detector(with_model(tiny_config, use_attention=False), rng)
        with pytest.raises(ConfigError):
            attention_statistics(plain, np.zeros((1, tiny_config.framing.n_samples)))

    def test_relevant_bands_group_contiguous_bins(self):
        profile = np.array([0.5, 0.7, 0.8, 0.5, 0.2, 0.5])
        mean = np.tile(profile[None, :, None], (4, 1, 2))
        stats = AttentionStatistics(mean=mean, std=np.zeros_like(mean),
                                    center_freqs=np.array([100.0, 200, 300, 400, 500, 600]), n_clips=3)
        bands = relevant_bands(stats)
        assert [(b.first_bin, b.last_bin, b.emphasized) for b in bands] == [(1, 2, True), (4, 4, False)]
        assert (bands[0].low_hz, bands[0].high_hz) == (200.0, 300.0)
        assert bands[0].mean == pytest.approx(0.75)

    def test_export(self, tiny_config, rng, tmp_path):
        detector = build_detector(tiny_config, np.random.default_rng(0))
        stats = attention_statistics(detector, rng.standard_normal((2, tiny_config.framing.n_samples)))
        written = export_attention(stats, tmp_path / "attention")
        names = {p.name for p in written}
        assert {"attention_mean.asdf", "attention_std.asdf", "attention_bands.yaml",
                "attention_mean_ch0.png", "attention_std_ch1.png"} <= names
        assert all(p.is_file() for p in written)
        np.testing.assert_allclose(read_container(tmp_path / "attention" / "attention_mean.asdf"),
                                   stats.mean, atol=1e-7)
        table = yaml.safe_load((tmp_path / "attention" / "attention_bands.yaml").read_text())
        assert table["n_clips"] == 2
        assert len(table["bands"]) == tiny_config.framing.n_mels

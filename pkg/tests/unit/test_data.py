"""
Tests for WAV decoding, dataset scanning and clip loading
"""

import numpy as np
import pytest
import soundfile as sf

from src.core.config import FramingConfig
from src.core.errors import (
    ChannelCountError,
    DataError,
    DatasetError,
    EncodingError,
    LabelError,
    MalformedHeaderError,
    SampleRateError,
)
from src.data.dataset import LabelVocab, Split, load_clips, parse_clip_name, scan_dataset
from src.data.synthetic import generate_tone_dataset
from src.data.wav import decode_wav, encode_wav, fit_length
from src.dsp.frontend import Waveform


class TestWav:
    def test_pcm_scaling(self, tmp_path):
        path = tmp_path / "half.wav"
        sf.write(str(path), np.array([16384, -32768, 0], dtype=np.int16), 16000, subtype="PCM_16")
        waveform = decode_wav(path)
        np.testing.assert_array_equal(waveform.samples, [0.5, -1.0, 0.0])
        assert waveform.sample_rate == 16000

    def test_round_trip_of_representable_samples(self, tmp_path, rng):
        samples = rng.integers(-32768, 32768, size=400).astype(np.float32) / 32768.0
        path = encode_wav(tmp_path / "clip.wav", Waveform(samples, 16000))
        np.testing.assert_array_equal(decode_wav(path).samples, samples)

    def test_stereo_rejected(self, tmp_path):
        path = tmp_path / "stereo.wav"
        sf.write(str(path), np.zeros((100, 2), dtype=np.int16), 16000, subtype="PCM_16")
        with pytest.raises(ChannelCountError):
            decode_wav(path)

    def test_other_rate_rejected(self, tmp_path):
        path = tmp_path / "slow.wav"
        sf.write(str(path), np.zeros(100, dtype=np.int16), 8000, subtype="PCM_16")
        with pytest.raises(SampleRateError):
            decode_wav(path, sample_rate=16000)

    def test_float_encoding_rejected(self, tmp_path):
        path = tmp_path / "float.wav"
        sf.write(str(path), np.zeros(100, dtype=np.float32), 16000, subtype="FLOAT")
        with pytest.raises(EncodingError):
            decode_wav(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"RIFF\x00\x00not really a wave file")
        with pytest.raises(MalformedHeaderError):
            decode_wav(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            decode_wav(tmp_path / "absent.wav")

    def test_fit_length(self):
        np.testing.assert_array_equal(fit_length(np.ones(3), 5), [1, 1, 1, 0, 0])
        np.testing.assert_array_equal(fit_length(np.arange(6), 4), [0, 1, 2, 3])


class TestClipNames:
    @pytest.mark.parametrize("name,expected", [
        ("normal_id_00_00000000.wav", (False, "00")),
        ("anomaly_id_06_00000123.wav", (True, "06")),
        ("normal_id_00.wav", None),
        ("Normal_id_00_00000000.wav", None),
        ("readme.txt", None),
    ])
    def test_parse(self, name, expected):
        assert parse_clip_name(name) == expected


class TestVocab:
    def test_sorted_pairs_and_parsing(self):
        vocab = LabelVocab([("pump", "00"), ("fan", "02"), ("fan", "00"), ("pump", "00")])
        assert vocab.labels() == ["fan:00", "fan:02", "pump:00"]
        assert vocab.parse("fan:02") == 1
        assert LabelVocab.from_labels(vocab.labels()) == vocab

    @pytest.mark.parametrize("label", ["fan:07", "fan", "valve:00"])
    def test_unknown_labels(self, label):
        with pytest.raises(LabelError):
            LabelVocab([("fan", "00")]).parse(label)


class TestScan:
    def test_mini_corpus(self, mini_corpus):
        index, vocab = scan_dataset(mini_corpus)
        assert vocab.labels() == ["toyhum:00", "toyhum:02", "toywhine:00", "toywhine:02"]
        assert len(index.select(Split.TRAIN)) == 16
        test = index.select(Split.TEST)
        assert len(test) == 16
        assert sum(r.is_anomaly for r in test) == 8
        assert not any(r.is_anomaly for r in index.select(Split.TRAIN))

    def test_skips_unparseable_and_anomalous_training_clips(self, tmp_path):
        root = generate_tone_dataset(tmp_path / "data", machines={("fan", "00"): 500.0},
                                     train_per_id=2, test_normal_per_id=1, test_anomaly_per_id=1, seconds=0.1)
        clip = Waveform(np.zeros(1600, dtype=np.float32), 16000)
        encode_wav(root / "fan" / "train" / "anomaly_id_00_00000099.wav", clip)
        encode_wav(root / "fan" / "train" / "notes.wav", clip)
        index, vocab = scan_dataset(root)
        assert [r.path.name for r in index.select(Split.TRAIN)] == [
            "normal_id_00_00000000.wav", "normal_id_00_00000001.wav"]
        assert len(vocab) == 1

    def test_missing_root(self, tmp_path):
        with pytest.raises(DatasetError):
            scan_dataset(tmp_path / "nowhere")

    def test_no_training_clips(self, tmp_path):
        (tmp_path / "fan" / "test").mkdir(parents=True)
        with pytest.raises(DatasetError):
            scan_dataset(tmp_path)

    def test_load_clips(self, mini_corpus):
        index, vocab = scan_dataset(mini_corpus)
        framing = FramingConfig(clip_seconds=1.0, win_ms=32.0, n_mels=32)
        clips = load_clips(index.select(Split.TRAIN), vocab, framing, workers=2)
        assert clips.waveforms.shape == (16, framing.n_samples)
        assert clips.waveforms.dtype == np.float32
        assert [vocab.labels()[i] for i in clips.labels[::4]] == vocab.labels()
        assert np.max(np.abs(clips.waveforms)) <= 1.0

    def test_load_fits_clip_length(self, mini_corpus):
        index, vocab = scan_dataset(mini_corpus)
        framing = FramingConfig(clip_seconds=0.5, win_ms=32.0, n_mels=32)
        assert load_clips(index.select(Split.TEST), vocab, framing).waveforms.shape == (16, 8000)

    def test_load_nothing(self):
        clips = load_clips([], LabelVocab([("fan", "00")]), FramingConfig(clip_seconds=0.1))
        assert len(clips) == 0
        assert clips.waveforms.shape == (0, 1600)

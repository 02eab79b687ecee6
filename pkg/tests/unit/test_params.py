"""
Tests for parameter accounting and the ablation table
"""

import pytest

from src.core.config import AsdConfig, PoolingKind
from src.core.layers import dense_conv_parameters, separable_conv_parameters
from src.evaluation.params import ablation_variants, count_parameters, expected_parameter_count
from src.modules.detector import build_detector


def with_model(config, **updates):
    return config.model_copy(update={"model": config.model.model_copy(update=updates)})


class TestDefaultBuild:
    def test_total_below_one_million(self):
        detector = build_detector(AsdConfig())
        assert detector.num_parameters() == 900_070
        assert detector.num_parameters() < 1_000_000

    def test_total_within_five_percent_of_the_reported_size(self):
        total = expected_parameter_count(AsdConfig())["total"]
        assert abs(total - 884_000) <= 0.05 * 884_000

    def test_component_breakdown(self):
        counts = expected_parameter_count(AsdConfig())
        assert counts["wavegram"] == 147_584
        assert counts["attention"] == 1_428
        assert counts["stem"] == 5_202
        assert counts["bottlenecks"] == 632_576
        assert counts["tail"] == 33_536
        assert counts["pooling"] == 41_472
        assert counts["embedding"] == 33_024
        assert counts["head"] == 5_248
        assert counts["total"] == 900_070

    def test_pooling_grid(self):
        detector = build_detector(AsdConfig())
        assert detector.backbone.grid == (20, 8)

    def test_measured_breakdown_sums_to_total(self):
        report = count_parameters(build_detector(AsdConfig()))
        assert report.total == 900_070
        assert sum(report.breakdown.values()) == report.total
        assert report.breakdown["feature_net.attention"] == 1_428
        assert report.breakdown["feature_net.wavegram"] == 147_584


class TestAblations:
    def test_default_table(self):
        table = {v.name: v.parameters for v in ablation_variants(AsdConfig())}
        assert table["full"] == 900_070
        assert table["without_attention"] == 898_642
        assert table["without_separable"] == 941_554
        assert table["without_attention_and_separable"] < table["without_separable"]
        assert table["without_attention"] < table["full"] < table["without_separable"]

    def test_measured_matches_closed_form(self, tiny_config):
        closed = ablation_variants(tiny_config)
        measured = ablation_variants(tiny_config, measure=True)
        assert [v.parameters for v in closed] == [v.parameters for v in measured]


class TestClosedForm:
    @pytest.mark.parametrize("updates", [
        {},
        {"global_pooling": PoolingKind.AVG},
        {"use_wavegram": False},
        {"use_mel": False},
        {"use_separable": False, "use_attention": False},
    ])
    def test_matches_built_model(self, tiny_config, updates):
        config = with_model(tiny_config, **updates)
        assert expected_parameter_count(config)["total"] == build_detector(config).num_parameters()

    def test_small_configuration(self, small_config):
        assert expected_parameter_count(small_config)["total"] == build_detector(small_config).num_parameters()

    def test_avg_pooling_has_no_pooling_weights(self, tiny_config):
        assert expected_parameter_count(with_model(tiny_config, global_pooling=PoolingKind.AVG))["pooling"] == 0

    @pytest.mark.parametrize("c_in,c_out", [(2, 16), (16, 64)])
    def test_separable_cheaper_than_dense(self, c_in, c_out):
        assert separable_conv_parameters(3, c_in, c_out) < dense_conv_parameters(3, c_in, c_out)
        assert separable_conv_parameters(3, c_in, c_out) == 9 * c_in + c_in * c_out

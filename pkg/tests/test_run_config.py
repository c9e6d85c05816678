"""
Unit tests for run configuration parsing
"""

import math

import pytest

from src.core.gaussian_source import SourceMode
from src.core.run_config import ConfigError, RunConfig, load_config, parse_config
from src.core.security import Attack
from src.processors.distillation import EveBound


class TestDefaults:
    def test_seed_only_file(self):
        config = parse_config("seed = 42\n")
        assert config.seed == 42
        assert config.n_symbols == RunConfig().n_symbols
        assert config.attack is Attack.COLLECTIVE
        assert config.eve_bound is EveBound.MEAN
        assert config.postselect is True

    def test_default_block_is_ten_thousand_symbols(self):
        assert RunConfig().timing().block_length == 10_000

    def test_security_context(self):
        ctx = RunConfig(eta=0.4, delta=0.11).security_context()
        assert (ctx.eta, ctx.delta, ctx.V) == (0.4, 0.11, 8.35)

    def test_minimum_uncertainty_source(self):
        config = RunConfig(source_mode="minimum", r=0.3)
        assert config.source_mode is SourceMode.MINIMUM_UNCERTAINTY
        assert config.V == pytest.approx(math.cosh(0.6))
        assert config.source().r == pytest.approx(0.3)


class TestParsing:
    def test_comments_and_blank_lines(self):
        text = "# bench run\n\nseed = 7   # fixed\neta = 0.4\ndelta = 0.11\nattack = Individual\n"
        config = parse_config(text)
        assert (config.seed, config.eta, config.delta) == (7, 0.4, 0.11)
        assert config.attack is Attack.INDIVIDUAL

    def test_power_notation(self):
        assert parse_config("epsilon_pa = 2^-64").epsilon_pa == 2.0 ** -64
        assert parse_config("epsilon_pa = 1e-10").epsilon_pa == 1e-10

    def test_reconciliation_efficiency(self):
        assert RunConfig().reconciliation_efficiency == 1.25
        assert parse_config("reconciliation_efficiency = 1.4").reconciliation_efficiency == 1.4
        with pytest.raises(ConfigError, match="reconciliation_efficiency"):
            parse_config("reconciliation_efficiency = 0.8")

    def test_booleans(self):
        assert parse_config("postselect = off").postselect is False
        assert parse_config("postselect = yes").postselect is True

    def test_out_of_range_names_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("seed = 1\neta = 1.5\n")
        assert exc.value.key == "eta"
        assert exc.value.line == 2
        assert "line 2" in str(exc.value)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="Unknown key 'colour'") as exc:
            parse_config("seed = 1\n\ncolour = blue\n")
        assert exc.value.line == 3

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="Duplicate") as exc:
            parse_config("seed = 1\nseed = 2\n")
        assert exc.value.line == 2

    @pytest.mark.parametrize("text", [
        "seed = seven",
        "n_symbols = 1.5",
        "postselect = maybe",
        "attack = coherent",
        "eta 0.5",
        "V = inf",
    ])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_cross_field_check_reports_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("seed = 1\ndt_switch_s = 1e-8\n")
        assert exc.value.key == "dt_switch_s"
        assert exc.value.line == 2

    def test_unknown_transport(self):
        with pytest.raises(ConfigError):
            parse_config("transport = carrier")

    def test_config_error_is_value_error(self):
        assert issubclass(ConfigError, ValueError)


class TestRoundTrip:
    def test_overrides(self):
        config = RunConfig(seed=1).with_overrides(seed=9, out_dir=None)
        assert config.seed == 9
        assert config.out_dir == "output"

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"seed": 1, "gain": 2.0})

    def test_to_dict_is_plain(self):
        data = RunConfig().to_dict()
        assert data["attack"] == "collective"
        assert data["eve_bound"] == "mean"
        assert RunConfig.from_dict(data) == RunConfig()


class TestLoad:
    def test_load_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 3\neta = 0.8\n", encoding="utf-8")
        assert load_config(path).seed == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.cfg")

    def test_binary_file_is_config_error(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_bytes(b"seed = 1\n\xff\xfe eta = 0.8\n")
        with pytest.raises(ConfigError, match="UTF-8"):
            load_config(path)

"""Tests for scenario configuration parsing, presets and overrides."""

from pathlib import Path

import pytest

from fluxpoint.config import dump_config, load_config, parse_config, with_overrides
from fluxpoint.errors import ConfigError

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def _make_text(run: str = "", extra: str = "") -> str:
    return f"[run]\nscenario = decaying_shear\n{run}\n{extra}"


class TestParseConfig:
    @pytest.mark.parametrize("name", sorted(p.name for p in SCENARIO_DIR.glob("*.ini")))
    def test_shipped_configs(self, name):
        config = load_config(SCENARIO_DIR / name)
        assert config.scenario == name.removesuffix(".ini")
        assert config.h > 0.0

    def test_presets_fill_defaults(self):
        config = parse_config(_make_text())
        assert config.h == 0.25
        assert config.c_dt == 0.005
        assert config.method == "fc"
        assert config.dt == 0.0
        assert config.fluid["eta"] == 0.05
        assert config.params == {"p_mean": 3.0, "p_amplitude": 0.01, "p_frequency": 10.0}

    def test_values_coerced(self):
        config = parse_config(_make_text("h = 0.125\nseed = 4\nweight_exponent = -1", "[solver]\nrestart_on_breakdown = false"))
        assert config.h == 0.125
        assert config.seed == 4
        assert config.weight_exponent == -1
        assert config.solver["restart_on_breakdown"] is False

    def test_cylinder_viscosity_from_reynolds(self):
        config = load_config(SCENARIO_DIR / "square_cylinder.ini")
        assert config.fluid_params().eta == pytest.approx(1.0 * 2.0 * 30.0 / 500.0)
        assert config.solver_config().max_iter == 4000

    def test_cloud_params(self):
        params = load_config(SCENARIO_DIR / "stitch_sphere.ini").cloud_params()
        assert params.beta == 0.7
        assert params.spacing == 0.29
        assert params.margin == 1.0

    @pytest.mark.parametrize(
        "run, path",
        [
            ("bogus = 1", "run.bogus"),
            ("method = upwind", "run.method"),
            ("h = -0.1", "run.h"),
            ("weight_exponent = 2", "run.weight_exponent"),
        ],
    )
    def test_invalid_run_values(self, run, path):
        with pytest.raises(ConfigError) as err:
            parse_config(_make_text(run))
        assert err.value.path == path
        assert err.value.context() == {"key": path}

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section") as err:
            parse_config(_make_text(extra="[channel]\nlength = 3"))
        assert err.value.path == "channel"

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError, match="unknown scenario"):
            parse_config("[run]\nscenario = lid_cavity\nh = 0.1\n")

    def test_missing_run_section(self):
        with pytest.raises(ConfigError, match=r"missing \[run\]"):
            parse_config("[fluid]\nrho = 1\n")

    def test_cloud_ordering(self):
        with pytest.raises(ConfigError, match="r_min") as err:
            parse_config(_make_text("r_min = 0.5"))
        assert err.value.path == "run"

    def test_malformed(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config("h = 0.1\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.ini")


class TestDumpConfig:
    @pytest.mark.parametrize("name", sorted(p.name for p in SCENARIO_DIR.glob("*.ini")))
    def test_echo_parses_back(self, name):
        config = load_config(SCENARIO_DIR / name)
        assert parse_config(dump_config(config)) == config

    def test_floats_keep_full_precision(self):
        config = parse_config(_make_text("h = 0.1234567890123"))
        assert "h = 0.1234567890123" in dump_config(config)


class TestWithOverrides:
    def test_run_overrides(self):
        config = parse_config(_make_text())
        changed = with_overrides(config, run={"h": 0.5, "method": None, "out_dir": "elsewhere"})
        assert changed.h == 0.5
        assert changed.method == "fc"
        assert changed.out_dir == "elsewhere"
        assert config.h == 0.25

    def test_section_overrides_validated(self):
        config = parse_config(_make_text())
        with pytest.raises(ConfigError) as err:
            with_overrides(config, fluid={"rho": 0.0})
        assert err.value.path == "fluid.rho"

    def test_full_scale(self):
        config = load_config(SCENARIO_DIR / "square_cylinder.ini")
        full = with_overrides(config, full_scale=True)
        assert full.params["reynolds"] == 10000.0
        assert full.h == 0.4
        assert full.t_end == 50.0
        assert full.fluid_params().eta == pytest.approx(0.006)

    def test_explicit_values_win_over_full_scale(self):
        config = load_config(SCENARIO_DIR / "square_cylinder.ini")
        assert with_overrides(config, run={"h": 0.3}, full_scale=True).h == 0.3

    def test_full_scale_only_for_cylinder(self):
        with pytest.raises(ConfigError, match="square_cylinder"):
            with_overrides(parse_config(_make_text()), full_scale=True)

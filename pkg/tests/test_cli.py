"""Config parsing, CLI behavior, result bundles and determinism."""

import json
from pathlib import Path

import pytest

from antmuscle.cli import main
from antmuscle.config import (
    SCENARIOS,
    default_config_text,
    load_config,
    parse_config,
)
from antmuscle.errors import ConfigurationError


class TestConfigParsing:
    def test_defaults_parse_for_every_scenario(self):
        for scenario in SCENARIOS:
            cfg = parse_config(default_config_text(scenario))
            assert cfg.scenario == scenario

    def test_unknown_key_rejected(self):
        text = "[run]\nscenario = bench\n[plant]\nunits = 4\nbogus = 1\n[controller]\n[bench]\n"
        with pytest.raises(ConfigurationError, match="bogus"):
            parse_config(text)

    def test_unknown_section_rejected(self):
        text = "[run]\nscenario = bench\n[plant]\n[controller]\n[bench]\n[extras]\nx = 1\n"
        with pytest.raises(ConfigurationError, match="extras"):
            parse_config(text)

    def test_missing_required_block_rejected(self):
        text = "[run]\nscenario = controller-compare\n[plant]\n[controller]\n"
        with pytest.raises(ConfigurationError, match="compare"):
            parse_config(text)

    def test_bad_scenario_rejected(self):
        with pytest.raises(ConfigurationError, match="scenario"):
            parse_config("[run]\nscenario = warp\n")

    def test_bad_boolean_rejected(self):
        text = (
            "[run]\nscenario = contact\n[contact]\n"
            "adaptive_inverted = maybe\n[controller]\n"
        )
        with pytest.raises(ConfigurationError, match="boolean"):
            parse_config(text)

    def test_values_override_defaults(self):
        text = (
            "[run]\nscenario = contact\nseed = 7\n[contact]\nF_preload = 0.9\n"
            "[controller]\nfb_enabled = false\n"
        )
        cfg = parse_config(text)
        assert cfg.seed == 7
        assert cfg.contact.F_preload == 0.9
        assert cfg.controller.fb_enabled is False

    def test_config_hash_tracks_content(self):
        a = parse_config(default_config_text("bench"))
        b = parse_config(default_config_text("bench").replace("seed = 0", "seed = 1"))
        assert a.config_hash() != b.config_hash()


class TestCli:
    def test_print_config(self, capsys):
        assert main(["contact", "--print-config"]) == 0
        out = capsys.readouterr().out
        assert "[contact]" in out and "K_low" in out

    def test_missing_config_file_is_validation_error(self, tmp_path):
        rc = main(["bench", "--config", str(tmp_path / "nope.ini")])
        assert rc == 1

    def test_config_scenario_mismatch(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text(default_config_text("bench"))
        rc = main(["contact", "--config", str(path)])
        assert rc == 1

    def test_invalid_config_content(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[run]\nscenario = bench\n[bench]\nn_ticks = ten\n")
        rc = main(["bench", "--config", str(path)])
        assert rc == 1

    def test_runtime_failure_exit_code(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text(
            "[run]\nscenario = contact\nout = %s\n[controller]\n"
            "[contact]\napproach_speed = 60.0\nhorizon = 1.0\n"
            % (tmp_path / "out")
        )
        rc = main(["contact", "--config", str(path)])
        assert rc == 2

    def test_decouple_map_bundle(self, tmp_path, capsys):
        rc = main(["decouple-map", "--out", str(tmp_path / "dec")])
        assert rc == 0
        out_dir = tmp_path / "dec"
        assert (out_dir / "decouple_map.csv").exists()
        assert (out_dir / "feasibility_boundary.csv").exists()
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["checks"]["zero_bias_zero_torque"]
        assert "PASS" in capsys.readouterr().out


class TestDeterminism:
    def test_decouple_map_bundle_is_byte_identical(self, tmp_path):
        from antmuscle.experiments import run_scenario

        cfg = parse_config(default_config_text("decouple-map"))
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_scenario(cfg, out)
            outs.append(out)
        for f in sorted(outs[0].iterdir()):
            assert (outs[1] / f.name).read_bytes() == f.read_bytes()

    def test_contact_trials_byte_identical(self, tmp_path):
        from antmuscle.experiments import run_scenario

        text = default_config_text("contact").replace("horizon = 5.0", "horizon = 0.5")
        cfg = parse_config(text)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_scenario(cfg, out)
            outs.append(out)
        for f in sorted(outs[0].iterdir()):
            assert (outs[1] / f.name).read_bytes() == f.read_bytes()

    def test_summary_recomputable_from_csv(self, tmp_path):
        """Summary metrics must match what the emitted CSVs imply."""
        import csv as csvmod
        import math

        from antmuscle.experiments import run_scenario

        cfg = parse_config(default_config_text("decouple-map"))
        out = tmp_path / "dec"
        run_scenario(cfg, out)
        summary = json.loads((out / "summary.json").read_text())
        with (out / "decouple_map.csv").open() as fh:
            rows = list(csvmod.DictReader(fh))
        t_at_zero_bias = max(
            abs(float(r["T"])) for r in rows if float(r["b"]) == 0.0
        )
        assert t_at_zero_bias == summary["max_abs_T_at_zero_bias"]

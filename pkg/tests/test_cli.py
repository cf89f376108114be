import math

import numpy as np
import pytest

from forced_kepler.cli import RunConfig, build_potential, content_hash, main, parse_config, run, serialize_config
from forced_kepler.errors import ParseError, ValidationError
from forced_kepler.loops import write_loop_csv
from forced_kepler.synthetic import radial_collision_orbit


class TestParse:
    def test_minimal(self):
        cfg = parse_config("period = 6.2831853\nminimize.winding = 1\n")
        assert cfg.period == pytest.approx(2 * math.pi, rel=1e-7)
        assert cfg.minimize.winding == 1
        assert cfg.minimize_config().N == cfg.grid == 256

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# header\n\ngrid = 64  # coarse\n")
        assert cfg.grid == 64

    def test_zero_winding_rejected(self):
        with pytest.raises(ValidationError) as info:
            parse_config("minimize.winding = 0")
        assert str(info.value).startswith("minimize.winding:")

    def test_linear_forcing_block(self):
        cfg = parse_config("potential.kind = linear\nforcing.fourier.cos = 0.001,0\nforcing.fourier.sin = 0,0\n")
        U = build_potential(cfg)
        T = cfg.period
        for t in (0.0, 0.7, 2.0):
            assert U.eval(t, (1.0, 1.0))[0] == pytest.approx(0.001 * math.cos(2 * math.pi * t / T), abs=1e-15)
            np.testing.assert_allclose(U.grad_x(t, (5.0, -2.0)), [[0.001 * math.cos(2 * math.pi * t / T), 0.0]], atol=1e-15)

    def test_missing_equals_reports_line(self):
        with pytest.raises(ParseError) as info:
            parse_config("grid = 64\nperiod 3.0\n")
        assert str(info.value).startswith("line 2:")

    def test_duplicate_key(self):
        with pytest.raises(ParseError):
            parse_config("grid = 64\ngrid = 128\n")

    def test_unknown_key(self):
        with pytest.raises(ValidationError) as info:
            parse_config("minimize.speed = 3\n")
        assert info.value.key == "minimize.speed"

    @pytest.mark.parametrize(
        "text, key",
        [
            ("period = -1", "period"),
            ("grid = 4", "grid"),
            ("grid = 2.5", "grid"),
            ("potential.kind = cubic", "potential.kind"),
            ("potential.kind = radial\npotential.params.exponent = 2.5", "potential.params.exponent"),
            ("forcing.fourier.cos = 1, 2, 3", "forcing.fourier.cos"),
            ("minimize.softening_schedule = 0.1, 0.01", "minimize.softening_schedule"),
            ("minimize.tol_grad = 0", "minimize.tol_grad"),
            ("arcs.x_minus = 0, 0", "arcs.x_minus"),
            ("analysis.deltas = 0.1, -0.05", "analysis.deltas"),
            ("period = abc", "period"),
        ],
    )
    def test_validation_errors(self, text, key):
        with pytest.raises(ValidationError) as info:
            parse_config(text)
        assert info.value.key == key

    def test_directions_normalized(self):
        cfg = parse_config("arcs.x_minus = 3, 4\n")
        assert cfg.arcs.x_minus == pytest.approx((0.6, 0.8))

    def test_round_trip(self):
        text = (
            "period = 3.5\ngrid = 128\nseed = 9\npotential.kind = trig_radial\n"
            "potential.params.exponent = 1.25\npotential.params.cos = 0.1, 0.2\n"
            "minimize.softening_schedule = 0.5, 0.05, 0\nanalysis.deltas = 0.1, 0.05\n"
        )
        cfg = parse_config(text)
        assert parse_config(serialize_config(cfg)) == cfg
        assert parse_config(serialize_config(RunConfig())) == RunConfig()


class TestHash:
    def test_git_blob_convention(self):
        # values produced by `git hash-object --stdin`
        assert content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
        assert content_hash("period = 1.0\n") == "f383ae6ab68a7bad821f52eeaf24f5fb9547a882"

    def test_input_bytes_change_hash(self):
        assert content_hash("a = 1\n", b"x") != content_hash("a = 1\n", b"y")


class TestRun:
    def test_verify(self, tmp_path):
        s = run(RunConfig(subcommand="verify", output=str(tmp_path / "v")))
        assert s.exit_status == 0
        assert "result.verify = pass" in s.text()
        assert (tmp_path / "v" / "summary.txt").read_text() == s.text()
        assert (tmp_path / "v" / "timing.txt").exists()

    def test_arcs(self, tmp_path):
        s = run(RunConfig(subcommand="arcs", output=str(tmp_path / "a")))
        assert s.exit_status == 0
        values = dict(line.split(" = ", 1) for line in s.text().splitlines())
        assert float(values["result.direct.action"]) < 5.6568542
        assert float(values["result.indirect.action"]) < 5.6568542
        assert values["result.inequality_holds"] == "true"
        for name in ("arc_direct.csv", "arc_indirect.csv"):
            assert (tmp_path / "a" / name).read_text().startswith("t,xi1,xi2,v1,v2\n")

    def test_minimize(self, tmp_path):
        cfg = parse_config("minimize.starts = 2\n")
        s = run(RunConfig(**{**cfg.__dict__, "subcommand": "minimize", "output": str(tmp_path / "m")}))
        assert s.exit_status == 0
        values = dict(line.split(" = ", 1) for line in s.text().splitlines())
        assert float(values["result.action.total"]) == pytest.approx(9.4247780, rel=1e-2)
        assert (tmp_path / "m" / "trajectory.csv").read_text().startswith("t,x1,x2,v1,v2\n")

    def test_analyze_bounce_is_certified_failure(self, tmp_path):
        s = run(RunConfig(subcommand="analyze", grid=1024, output=str(tmp_path / "b")))
        assert s.exit_status == 2
        assert "certificate.direction_limit_ok = false" in s.text()

    def test_analyze_input_file(self, tmp_path):
        f = tmp_path / "radial.csv"
        write_loop_csv(radial_collision_orbit(2 * math.pi, 2048), f)
        cfg = RunConfig(subcommand="analyze", output=str(tmp_path / "r"))
        cfg = RunConfig(**{**cfg.__dict__, "analysis": type(cfg.analysis)(input=str(f))})
        s = run(cfg)
        assert s.exit_status == 0, s.text()
        assert "certificate.passed = true" in s.text()

    def test_surgery(self, tmp_path):
        s = run(RunConfig(subcommand="surgery", grid=2048, output=str(tmp_path / "s")))
        assert s.exit_status == 0

    def test_missing_input_is_error(self, tmp_path):
        cfg = RunConfig(subcommand="analyze", output=str(tmp_path / "e"))
        cfg = RunConfig(**{**cfg.__dict__, "analysis": type(cfg.analysis)(input=str(tmp_path / "nope.csv"))})
        with pytest.raises(OSError):
            run(cfg)

    def test_inner_errors_exit_one(self, tmp_path):
        cfg = parse_config("arcs.x_minus = 1, 0\narcs.x_plus = -1, 0\n")
        s = run(RunConfig(**{**cfg.__dict__, "subcommand": "arcs", "output": str(tmp_path / "x")}))
        assert s.exit_status == 1
        assert "AntipodalEndpoints" in s.text()


class TestMain:
    def test_seed_flag_and_determinism(self, tmp_path, capsys):
        conf = tmp_path / "run.conf"
        conf.write_text("minimize.starts = 2\n")
        outs = []
        for name in ("one", "two"):
            assert main(["minimize", "--config", str(conf), "--out", str(tmp_path / name), "--seed", "5"]) == 0
            outs.append({f: (tmp_path / name / f).read_bytes() for f in ("summary.txt", "trajectory.csv", "starts.csv")})
        assert outs[0] == outs[1]
        assert b"seed = 5" in outs[0]["summary.txt"]
        capsys.readouterr()

    def test_bad_config_exit_one(self, tmp_path, capsys):
        conf = tmp_path / "bad.conf"
        conf.write_text("grid 12\n")
        assert main(["verify", "--config", str(conf), "--out", str(tmp_path / "o")]) == 1
        assert "line 1" in capsys.readouterr().err

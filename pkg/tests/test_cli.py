"""Config parsing, CSV emission, CLI flows, determinism, exit codes."""

import os

import numpy as np
import pytest

from torusma.cli import (
    BadValue,
    MissingKey,
    UnknownKey,
    main,
    parse_config,
    write_csv,
)
from torusma.fields import ScalarField, TorusGrid, save_scalar


MINIMAL_SOLVE = """\
[run]
command = solve
seed = 11

[grid]
complex_dim = 1
resolution = 32

[solve]
lambda = 0.0
density = const:1.0
"""


class TestParseConfig:
    def test_minimal_valid(self):
        cfg = parse_config(MINIMAL_SOLVE)
        assert cfg.command == "solve"
        assert cfg.seed == 11
        assert cfg.get("solve", "density") == "const:1.0"

    def test_missing_resolution(self):
        text = MINIMAL_SOLVE.replace("resolution = 32\n", "")
        with pytest.raises(MissingKey) as err:
            parse_config(text)
        assert "grid.resolution" in str(err.value)

    def test_negative_lambda(self):
        text = MINIMAL_SOLVE.replace("lambda = 0.0", "lambda = -1")
        with pytest.raises(BadValue) as err:
            parse_config(text)
        assert "lambda" in str(err.value)
        assert "line" in str(err.value)

    def test_unknown_key_rejected(self):
        text = MINIMAL_SOLVE + "mystery = 3\n"
        with pytest.raises(UnknownKey):
            parse_config(text)

    def test_unknown_section_rejected(self):
        text = MINIMAL_SOLVE + "\n[extra]\nfoo = 1\n"
        with pytest.raises(UnknownKey):
            parse_config(text)

    def test_non_numeric_value(self):
        text = MINIMAL_SOLVE.replace("resolution = 32", "resolution = many")
        with pytest.raises(BadValue):
            parse_config(text)

    def test_missing_referenced_file(self, tmp_path):
        text = MINIMAL_SOLVE.replace("const:1.0", "path:/does/not/exist.field")
        with pytest.raises(BadValue):
            parse_config(text)


class TestWriteCsv:
    def test_header_only(self, tmp_path):
        p = tmp_path / "empty.csv"
        write_csv([], ["a", "b"], p)
        assert p.read_text() == "a,b\n"

    def test_round_trip_17_digits(self, tmp_path):
        p = tmp_path / "row.csv"
        x = 0.1234567890123456789
        write_csv([(x, 1, "tag")], ["x", "n", "label"], p)
        lines = p.read_text().splitlines()
        assert float(lines[1].split(",")[0]) == x

    def test_arity_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv([(1.0,)], ["a", "b"], tmp_path / "bad.csv")


class TestCliFlows:
    def test_trivial_solve_writes_zero_potential(self, tmp_path):
        out = tmp_path / "phi.field"
        rep = tmp_path / "solve.csv"
        code = main([
            "solve", "--dim", "1", "--resolution", "32",
            "--density", "const:1.0",
            "--out-potential", str(out), "--report", str(rep),
        ])
        assert code == 0
        from torusma.fields import load_scalar

        phi = load_scalar(out)
        assert np.max(np.abs(phi.values)) < 1e-10
        assert rep.read_text().startswith("iteration,sup_residual")

    def test_duplicate_output_refused(self, tmp_path):
        out = tmp_path / "phi.field"
        args = ["solve", "--dim", "1", "--resolution", "32",
                "--density", "const:1.0", "--out-potential", str(out)]
        assert main(args) == 0
        assert main(args) == 4
        assert main(args + ["--force"]) == 0

    def test_config_file_solve(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(MINIMAL_SOLVE)
        assert main(["--config", str(cfg)]) == 0

    def test_config_error_exit_5(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(MINIMAL_SOLVE.replace("lambda = 0.0", "lambda = -2"))
        assert main(["--config", str(cfg)]) == 5

    def test_verify_suite_deterministic(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert main(["verify", "suite", "--seed", "9", "--trials", "5", "--report", str(a)]) == 0
        assert main(["verify", "suite", "--seed", "9", "--trials", "5", "--report", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_verify_comparison_csv(self, tmp_path):
        out = tmp_path / "cmp.csv"
        assert main(["verify", "comparison", "--seed", "4", "--trials", "6",
                     "--report", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "trial,lhs,rhs,margin"
        assert len(lines) == 7
        for line in lines[1:]:
            assert float(line.split(",")[3]) >= -1e-8

    def test_orlicz_subcommand(self, tmp_path):
        g = TorusGrid(1, 32)
        f = ScalarField(g, np.full(g.shape, 1.0))
        field_path = tmp_path / "one.field"
        save_scalar(f, field_path)
        rep = tmp_path / "orlicz.csv"
        code = main(["orlicz", "--gauge", "exp:1", "--input", str(field_path),
                     "--report", str(rep)])
        assert code == 0
        norm = float(rep.read_text().splitlines()[1].split(",")[1])
        assert norm == pytest.approx(1 / np.log(2), abs=1e-10)

    def test_capacity_profile_csv(self, tmp_path):
        out = tmp_path / "prof.csv"
        code = main(["capacity", "--dim", "1", "--resolution", "32",
                     "--profile", str(out), "--seed", "2"])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "s,a"
        a_vals = [float(l.split(",")[1]) for l in lines[1:]]
        assert all(b >= a - 1e-14 for a, b in zip(a_vals, a_vals[1:]))

    def test_capacity_family_dir(self, tmp_path):
        g = TorusGrid(1, 32)
        famdir = tmp_path / "family"
        famdir.mkdir()
        # a valid [0, 1] cone potential: any constant in [0, 1]
        save_scalar(ScalarField(g, np.full(g.shape, 0.5)), famdir / "m0.field")
        out = tmp_path / "prof.csv"
        code = main(["capacity", "--dim", "1", "--resolution", "32",
                     "--family", f"dir:{famdir}", "--mask", "disk:0.2",
                     "--profile", str(out)])
        assert code == 0

    def test_usage_error_remapped(self):
        assert main(["not-a-command"]) == 5

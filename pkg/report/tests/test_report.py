"""Rendering of the bundled CSV schemas: errors, warnings, idempotency."""

import subprocess
import sys

import pytest

from mareport.plots import (
    EmptyData,
    MissingColumn,
    PlotSpec,
    main,
    read_columns,
    render_convergence,
    render_oscillation,
)

SOLVE_CSV = """\
iteration,sup_residual
0,1.2859
1,0.2244
2,0.014
3,5.5e-05
4,8.4e-10
"""

CONTINUATION_CSV = """\
eps_or_t,c_eps_or_K,oscillation,sup_laplacian,residual,warm_dist
0.1,-0.0061,0.0506,3.9,2.4e-11,0
0.0316,-0.0020,0.0506,4.0,5.7e-11,0.0013
0.01,-0.00063,0.0506,4.0,2.0e-10,0.00043
0.0031,-0.0002,0.0506,4.0,1.7e-08,0.00014
"""

PROFILE_CSV = """\
s,a
-1.5,0
-1.0,0.1
-0.5,0.25
-0.1,0.41
"""


@pytest.fixture
def solve_csv(tmp_path):
    p = tmp_path / "solve.csv"
    p.write_text(SOLVE_CSV)
    return p


@pytest.fixture
def continuation_csv(tmp_path):
    p = tmp_path / "cont.csv"
    p.write_text(CONTINUATION_CSV)
    return p


class TestReadColumns:
    def test_reads_floats(self, solve_csv):
        cols, skipped = read_columns(solve_csv, ["iteration", "sup_residual"])
        assert cols["iteration"] == [0, 1, 2, 3, 4]
        assert skipped == 0

    def test_missing_column(self, solve_csv):
        with pytest.raises(MissingColumn):
            read_columns(solve_csv, ["no_such_column"])

    def test_header_only_is_empty(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("iteration,sup_residual\n")
        with pytest.raises(EmptyData):
            read_columns(p, ["iteration"])

    def test_bad_rows_skipped(self, tmp_path):
        p = tmp_path / "gaps.csv"
        p.write_text("x,y\n1,2\n3,\n4,5\n")
        cols, skipped = read_columns(p, ["x", "y"])
        assert cols["x"] == [1, 4]
        assert skipped == 1


class TestRendering:
    def test_convergence_plot(self, solve_csv, tmp_path):
        out = tmp_path / "conv.png"
        spec = PlotSpec(str(solve_csv), "iteration", ("sup_residual",), log_y=True,
                        out_path=str(out))
        assert render_convergence(spec) == str(out)
        assert out.stat().st_size > 0

    def test_two_series_labelled(self, continuation_csv, tmp_path):
        out = tmp_path / "two.png"
        spec = PlotSpec(str(continuation_csv), "eps_or_t",
                        ("oscillation", "sup_laplacian"), log_x=True, out_path=str(out))
        render_oscillation(spec)
        assert out.stat().st_size > 0

    def test_idempotent_bytes(self, continuation_csv, tmp_path):
        a = tmp_path / "a.png"
        b = tmp_path / "b.png"
        for out in (a, b):
            spec = PlotSpec(str(continuation_csv), "eps_or_t", ("oscillation",),
                            log_x=True, out_path=str(out))
            render_oscillation(spec)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_csv_errors(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("eps_or_t,oscillation\n")
        spec = PlotSpec(str(p), "eps_or_t", ("oscillation",), out_path=str(tmp_path / "x.png"))
        with pytest.raises(EmptyData):
            render_oscillation(spec)

    def test_mismatched_schema_errors(self, solve_csv, tmp_path):
        spec = PlotSpec(str(solve_csv), "eps_or_t", ("oscillation",),
                        out_path=str(tmp_path / "x.png"))
        with pytest.raises(MissingColumn):
            render_oscillation(spec)


class TestCli:
    def test_all_bundled_schemas_render(self, tmp_path):
        files = {
            "convergence": ("solve.csv", SOLVE_CSV),
            "oscillation": ("cont.csv", CONTINUATION_CSV),
            "capacity-profile": ("prof.csv", PROFILE_CSV),
            "warm-start": ("warm.csv", CONTINUATION_CSV),
        }
        for kind, (name, text) in files.items():
            src = tmp_path / name
            src.write_text(text)
            out = tmp_path / f"{kind}.png"
            assert main([kind, "--csv", str(src), "--out", str(out)]) == 0
            assert out.stat().st_size > 0

    def test_cli_idempotent(self, tmp_path):
        src = tmp_path / "solve.csv"
        src.write_text(SOLVE_CSV)
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        assert main(["convergence", "--csv", str(src), "--out", str(a)]) == 0
        assert main(["convergence", "--csv", str(src), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_column_exit_1(self, tmp_path):
        src = tmp_path / "solve.csv"
        src.write_text(SOLVE_CSV)
        out = tmp_path / "x.png"
        assert main(["oscillation", "--csv", str(src), "--out", str(out)]) == 1

    def test_custom_columns(self, tmp_path):
        src = tmp_path / "cont.csv"
        src.write_text(CONTINUATION_CSV)
        out = tmp_path / "res.png"
        code = main(["convergence", "--csv", str(src), "--out", str(out),
                     "--x", "eps_or_t", "--y", "residual,warm_dist", "--logx"])
        assert code == 0

    def test_entry_point_runs(self, tmp_path):
        src = tmp_path / "solve.csv"
        src.write_text(SOLVE_CSV)
        out = tmp_path / "e.png"
        proc = subprocess.run(
            [sys.executable, "-m", "mareport.plots", "convergence",
             "--csv", str(src), "--out", str(out)],
            capture_output=True,
        )
        assert proc.returncode == 0
        assert out.exists()

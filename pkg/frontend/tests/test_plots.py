from pathlib import Path

import pytest

from subdeq_plots import TraceParseError, plot_loss, plot_residuals, read_loss, read_traces
from subdeq_plots.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
CONVERGE = FIXTURES / "converge.csv"
LOSS = FIXTURES / "train_loss.csv"


class TestReaders:
    def test_converge_fixture_has_three_variants(self):
        traces = read_traces(CONVERGE)
        assert set(traces) == {"p=1", "p=10", "p=inf"}
        for ks, rs in traces.values():
            assert len(ks) == len(rs) >= 1
            assert all(r > 0 for r in rs)

    def test_loss_fixture(self):
        steps, losses = read_loss(LOSS)
        assert steps[0] == 0
        assert len(steps) == len(losses) == 200

    def test_missing_columns(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        with pytest.raises(TraceParseError, match="header"):
            read_traces(bad)
        with pytest.raises(TraceParseError, match="header"):
            read_loss(bad)

    def test_empty_csv(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("variant,k,residual\n")
        with pytest.raises(TraceParseError, match="no data"):
            read_traces(empty)

    def test_nonpositive_residual_rejected(self, tmp_path):
        bad = tmp_path / "zero.csv"
        bad.write_text("variant,k,residual\np=1,1,0.0\n")
        with pytest.raises(TraceParseError, match="positive"):
            read_traces(bad)

    def test_malformed_row_has_line_number(self, tmp_path):
        bad = tmp_path / "row.csv"
        bad.write_text("variant,k,residual\np=1,not-an-int,0.5\n")
        with pytest.raises(TraceParseError, match=":2"):
            read_traces(bad)


class TestRendering:
    def test_residuals_three_curve_figure(self, tmp_path):
        out = plot_residuals(CONVERGE, tmp_path / "residuals.png")
        assert out.exists() and out.stat().st_size > 5_000

    def test_single_variant_csv(self, tmp_path):
        single = tmp_path / "one.csv"
        single.write_text("variant,k,residual\nonly,1,0.5\nonly,2,0.05\nonly,3,0.005\n")
        out = plot_residuals(single, tmp_path / "one.png")
        assert out.exists()

    def test_loss_curve(self, tmp_path):
        out = plot_loss(LOSS, tmp_path / "loss.png")
        assert out.exists() and out.stat().st_size > 5_000

    def test_loss_overlay_two_files(self, tmp_path):
        other = tmp_path / "other.csv"
        other.write_text("step,loss\n0,1.0\n1,0.9\n2,0.7\n")
        out = plot_loss([LOSS, other], tmp_path / "overlay.png")
        assert out.exists()

    def test_zero_lr_flat_line(self, tmp_path):
        flat = tmp_path / "flat.csv"
        flat.write_text("step,loss\n" + "".join(f"{k},0.693\n" for k in range(5)))
        assert plot_loss(flat, tmp_path / "flat.png").exists()

    def test_deterministic_bytes_on_rerun(self, tmp_path):
        a = plot_residuals(CONVERGE, tmp_path / "a.png")
        b = plot_residuals(CONVERGE, tmp_path / "b.png")
        assert a.read_bytes() == b.read_bytes()
        la = plot_loss(LOSS, tmp_path / "la.png")
        lb = plot_loss(LOSS, tmp_path / "lb.png")
        assert la.read_bytes() == lb.read_bytes()

    def test_rerun_overwrites_same_path(self, tmp_path):
        target = tmp_path / "same.png"
        plot_residuals(CONVERGE, target)
        first = target.read_bytes()
        plot_residuals(CONVERGE, target)
        assert target.read_bytes() == first


class TestCli:
    def test_residuals_command(self, tmp_path):
        out = tmp_path / "r.png"
        assert main(["residuals", str(CONVERGE), "-o", str(out)]) == 0
        assert out.exists()

    def test_loss_command_overlay(self, tmp_path):
        out = tmp_path / "l.png"
        assert main(["loss", str(LOSS), str(LOSS), "-o", str(out)]) == 0
        assert out.exists()

    def test_empty_csv_nonzero_exit(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("variant,k,residual\n")
        assert main(["residuals", str(empty), "-o", str(tmp_path / "x.png")]) == 1

    def test_missing_file_nonzero_exit(self, tmp_path):
        assert main(["residuals", str(tmp_path / "nope.csv"), "-o", str(tmp_path / "x.png")]) == 1

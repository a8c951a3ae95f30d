import json

import pytest

from lwfsmc.cli import main


def run(args):
    return main([str(a) for a in args])


def synth_args(out, seed=8, **overrides):
    base = {"--mean-db": 49.0, "--slope-db-per-m": -0.03, "--sigma-db": 2.0,
            "--correlation": 0.95, "--speed": 10.0, "--slot-duration": 0.005}
    base.update(overrides)
    args = ["synth", "--out", out, "--seed", seed]
    for k, v in base.items():
        args += [k, v]
    return args


@pytest.fixture()
def workspace(tmp_path):
    trace = tmp_path / "trace.csv"
    assert run(synth_args(trace)) == 0
    return tmp_path, trace


class TestSynth:
    def test_writes_parseable_trace(self, tmp_path):
        out = tmp_path / "t.csv"
        assert run(synth_args(out)) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "position_m,slot,snr_db"
        assert len(lines) == 6001

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(synth_args(a))
        run(synth_args(b))
        assert a.read_bytes() == b.read_bytes()


class TestFit:
    def test_sixty_intervals_at_five_meters(self, workspace):
        tmp, trace = workspace
        model_path = tmp / "model.json"
        code = run(["fit", "--trace", trace, "--interval-m", 5, "--states", 4,
                    "--seed", 7, "--out", model_path])
        assert code == 0
        doc = json.loads(model_path.read_text())
        assert len(doc["intervals"]) == 60
        assert doc["n_states"] == 4

    def test_fit_report_and_thresholds(self, workspace):
        tmp, trace = workspace
        code = run(["fit", "--trace", trace, "--interval-m", 50, "--out", tmp / "m.json",
                    "--fit-report", tmp / "fits.csv", "--thresholds-out", tmp / "th.csv"])
        assert code == 0
        fits = (tmp / "fits.csv").read_text().splitlines()
        assert fits[0] == "window_index,family,n_samples,loglik,aicc,winner"
        assert len(fits) > 61 * 5  # one row per (window, family)
        th = (tmp / "th.csv").read_text().splitlines()
        assert len(th) == 7
        assert not any("nan" in line for line in th[1:])  # distortion known at fit time

    def test_states_must_be_power_of_two(self, workspace, capsys):
        tmp, trace = workspace
        code = run(["fit", "--trace", trace, "--interval-m", 5, "--states", 3,
                    "--seed", 7, "--out", tmp / "m.json"])
        assert code == 5
        assert "power of two" in capsys.readouterr().err

    def test_missing_trace_file(self, tmp_path, capsys):
        code = run(["fit", "--trace", tmp_path / "nope.csv", "--interval-m", 5,
                    "--out", tmp_path / "m.json"])
        assert code == 3
        assert "missing file" in capsys.readouterr().err

    def test_malformed_trace(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("position_m,slot,snr_db\n0.0,0\n")
        code = run(["fit", "--trace", bad, "--interval-m", 5, "--out", tmp_path / "m.json"])
        assert code == 4
        assert "malformed" in capsys.readouterr().err


class TestThresholds:
    def test_without_trace_distortion_is_nan(self, workspace):
        tmp, trace = workspace
        run(["fit", "--trace", trace, "--interval-m", 300, "--out", tmp / "m.json"])
        assert run(["thresholds", "--model", tmp / "m.json", "--out", tmp / "th.csv"]) == 0
        rows = (tmp / "th.csv").read_text().splitlines()
        assert rows[1].endswith("nan")

    def test_with_trace_recomputes_distortion(self, workspace):
        tmp, trace = workspace
        run(["fit", "--trace", trace, "--interval-m", 300, "--out", tmp / "m.json"])
        assert run(["thresholds", "--model", tmp / "m.json", "--out", tmp / "th.csv",
                    "--trace", trace]) == 0
        rows = (tmp / "th.csv").read_text().splitlines()
        assert float(rows[1].rsplit(",", 1)[1]) > 0

    def test_malformed_model(self, tmp_path, capsys):
        bad = tmp_path / "m.json"
        bad.write_text("{not json")
        assert run(["thresholds", "--model", bad, "--out", tmp_path / "t.csv"]) == 4


class TestSimulate:
    def test_simulate_writes_trace_and_sidecar(self, workspace):
        tmp, trace = workspace
        run(["fit", "--trace", trace, "--interval-m", 25, "--out", tmp / "m.json"])
        code = run(["simulate", "--model", tmp / "m.json", "--speed", 10,
                    "--seed", 3, "--out", tmp / "sim.csv"])
        assert code == 0
        sim = (tmp / "sim.csv").read_text().splitlines()
        assert sim[0] == "position_m,slot,snr_db"
        meta = dict(line.split("=", 1) for line in
                    (tmp / "sim.csv.meta").read_text().splitlines())
        assert meta["seed"] == "3"
        assert meta["dither"] == "uniform"
        assert len(meta["model_sha256"]) == 64

    def test_byte_identical_reruns(self, workspace):
        tmp, trace = workspace
        run(["fit", "--trace", trace, "--interval-m", 25, "--out", tmp / "m.json"])
        for name in ("s1.csv", "s2.csv"):
            run(["simulate", "--model", tmp / "m.json", "--seed", 3, "--out", tmp / name])
        assert (tmp / "s1.csv").read_bytes() == (tmp / "s2.csv").read_bytes()


class TestValidateCommand:
    def test_outputs_three_reports(self, workspace):
        tmp, trace = workspace
        held = tmp / "held.csv"
        run(synth_args(held, seed=1009))
        run(["fit", "--trace", trace, "--interval-m", 25, "--out", tmp / "m.json"])
        code = run(["validate", "--model", tmp / "m.json", "--heldout", held,
                    "--seed", 3, "--out-prefix", tmp / "rep"])
        assert code == 0
        mse_rows = (tmp / "rep_mse.csv").read_text().splitlines()
        assert mse_rows[0] == "interval_m,mse"
        assert float(mse_rows[1].split(",")[1]) >= 0
        overlay = (tmp / "rep_overlay.csv").read_text().splitlines()
        assert overlay[0] == "position_m,measured_mean_db,simulated_mean_db"
        matrices = (tmp / "rep_matrices.csv").read_text().splitlines()
        assert len(matrices) == 1 + 12 * 4  # 12 intervals, one row per state


class TestSweep:
    def test_eight_row_csv(self, workspace):
        tmp, trace = workspace
        out = tmp / "sweep.csv"
        code = run(["sweep", "--trace", trace, "--intervals", "5,10,20,25,40,50,100,300",
                    "--states", 4, "--seed", 7, "--out", out])
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "interval_m,mse"
        assert len(rows) == 9
        assert [float(r.split(",")[0]) for r in rows[1:]] == [5, 10, 20, 25, 40, 50, 100, 300]

    def test_full_determinism_across_pipeline(self, tmp_path):
        outputs = []
        for d in ("one", "two"):
            base = tmp_path / d
            base.mkdir()
            run(synth_args(base / "t.csv"))
            run(["fit", "--trace", base / "t.csv", "--interval-m", 25,
                 "--out", base / "m.json", "--fit-report", base / "f.csv"])
            run(["sweep", "--trace", base / "t.csv", "--intervals", "25,300",
                 "--seed", 7, "--out", base / "s.csv"])
            outputs.append(tuple((base / n).read_bytes()
                                 for n in ("t.csv", "m.json", "f.csv", "s.csv")))
        assert outputs[0] == outputs[1]


class TestUsage:
    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_help_lists_flags(self, capsys):
        for cmd in ("synth", "fit", "thresholds", "simulate", "validate", "sweep"):
            with pytest.raises(SystemExit) as exc:
                main([cmd, "--help"])
            assert exc.value.code == 0
            out = capsys.readouterr().out
            assert "--" in out and "default" in out

    def test_epilog_documents_exit_codes(self, capsys):
        with pytest.raises(SystemExit):
            main(["--help"])
        out = capsys.readouterr().out
        assert "exit codes" in out and "malformed" in out

import json

import numpy as np
import pytest

from mcsa.cli import main
from mcsa.daq import parse_capture
from mcsa.features import fixture_path, read_dataset
from mcsa.motor import read_waveform

SYNTH_THIRTY = ["synth", "--f1", "50", "--ns", "3000", "--nr", "2500", "--fault", "thirty_turns",
                "--fs", "3250", "--n", "390", "--noise", "0", "--seed", "1"]


@pytest.fixture
def run(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)

    def _run(*argv):
        try:
            code = main([str(a) for a in argv])
        except SystemExit as exc:
            code = exc.code
        out, err = capsys.readouterr()
        return code, out, err

    return _run


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A dataset and model trained once for the classify tests."""
    d = tmp_path_factory.mktemp("trained")
    assert main(["dataset", "--per-case", "30", "--out", str(d / "data.csv")]) == 0
    assert main(["train", "--data", str(d / "data.csv"), "--epochs", "200", "--out", str(d / "model.txt")]) == 0
    return d


class TestSynth:
    def test_reference_grid(self, run, tmp_path):
        code, out, _ = run(*SYNTH_THIRTY, "--out", "w.csv")
        assert code == 0
        w = read_waveform(tmp_path / "w.csv")
        assert len(w) == 390 and w.sample_rate_hz == 3250.0
        manifest = json.loads((tmp_path / "w.csv.manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert ["nr", 2500.0] in manifest["parameters"]
        assert manifest["tool_version"]

    def test_healthy_pure_tone(self, run, tmp_path):
        assert run("synth", "--fault", "healthy", "--noise", "0", "--out", "h.csv")[0] == 0
        w = read_waveform(tmp_path / "h.csv")
        t = np.arange(390) / 3250
        np.testing.assert_allclose(w.samples, np.sin(2 * np.pi * 50 * t), atol=1e-15)

    def test_aliasing_exit_2(self, run):
        code, _, err = run("synth", "--fs", "100", "--fault", "thirty_turns", "--n", "10", "--out", "x.csv")
        assert code == 2
        assert "--fs" in err and "Nyquist 50 Hz" in err
        assert "992" in err.split("alias:")[1].replace(",", " ").split()

    def test_bad_flag_value(self, run):
        code, _, err = run("synth", "--nr", "3100", "--out", "x.csv")
        assert code == 2 and "--nr" in err

    def test_custom_and_broken_bar(self, run, tmp_path):
        assert run("synth", "--fault", "custom", "--component", "91.67:0.13", "--out", "c.csv")[0] == 0
        assert run("synth", "--fault", "custom", "--out", "c.csv")[0] == 2
        assert run("synth", "--fault", "broken_bar", "--nr", "2850", "--out", "b.csv")[0] == 0


class TestSidebands:
    def test_thirty_turns_half(self, run, tmp_path):
        code, _, err = run("sidebands", "--ns", "3000", "--nr", "2500", "--p", "1", "--f", "50", "--k-max", "21",
                           "--schedule", "half", "--match-case", "thirty_turns", "--tol", "1.0", "--out", "r.csv")
        assert code == 1
        assert "20/22" in err
        rows = (tmp_path / "r.csv").read_text().splitlines()
        failing = [r.split(",")[:2] for r in rows[1:] if r.endswith(",false")]
        assert failing == [["3", "positive"], ["13", "negative"]]

    def test_zero_slip(self, run):
        code, out, _ = run("sidebands", "--s", "0", "--p", "1", "--f", "50", "--k-max", "1")
        assert code == 0
        freqs = sorted(float(r.split(",")[3]) for r in out.splitlines()[1:])
        assert freqs == [0.0, 100.0]

    def test_ten_turns_n1(self, run):
        code, out, err = run("sidebands", "--s", "0.133", "--schedule", "n1", "--match-case", "ten_turns", "--tol", "1.0")
        assert code == 0
        assert "20/20" in err
        assert out.splitlines()[0] == "k,branch,n,predicted_hz,fixture_hz,abs_delta_hz,pass"

    @pytest.mark.parametrize("slip", ["1.5", "-0.1"])
    def test_invalid_slip(self, run, slip):
        assert run("sidebands", "--s", slip)[0] == 2

    def test_needs_speed(self, run):
        assert run("sidebands", "--ns", "3000")[0] == 2


class TestAnalyze:
    def test_summary(self, run, tmp_path):
        run(*SYNTH_THIRTY, "--out", "w.csv")
        code, out, _ = run("analyze", "--in", "w.csv", "--out-prefix", "a")
        assert code == 0
        summary = dict(line.split("=", 1) for line in (tmp_path / "a.summary.txt").read_text().splitlines())
        assert summary["fs_hz"] == "3250"
        assert summary["ts_s"] == "3.076923e-4"
        assert summary["bin_hz"] == "8.3333"
        for suffix in ("spectrum.csv", "features.csv", "peaks.csv", "summary.txt"):
            assert (tmp_path / f"a.{suffix}").exists()
            assert (tmp_path / f"a.{suffix}.manifest.json").exists()

    def test_all_zero_input(self, run, tmp_path):
        (tmp_path / "z.csv").write_text("# fs_hz=3250\n" + "0\n" * 390)
        assert run("analyze", "--in", "z.csv", "--out-prefix", "z")[0] == 0
        (vector,) = read_dataset(tmp_path / "z.features.csv")
        assert not np.any(vector.values)

    def test_thirty_turns_92hz(self, run, tmp_path):
        run(*SYNTH_THIRTY[:-6], "--n", "3900", "--noise", "0", "--seed", "1", "--out", "w.csv")
        assert run("analyze", "--in", "w.csv", "--normalize", "none", "--out-prefix", "a")[0] == 0
        peaks = (tmp_path / "a.peaks.csv").read_text().splitlines()
        row = next(r.split(",") for r in peaks[1:] if r.startswith("1,positive,"))
        assert float(row[2]) == 92.0
        assert float(row[6]) == pytest.approx(0.1312, rel=0.05)

    def test_flag_grid(self, run, tmp_path):
        run(*SYNTH_THIRTY, "--out", "w.csv")
        code, _, _ = run("analyze", "--in", "w.csv", "--grid-from", "flags", "--ns", "3000", "--nr", "2500",
                         "--schedule", "half", "--out-prefix", "g")
        assert code == 0
        assert "flux:half_k_plus_one" in (tmp_path / "g.summary.txt").read_text()

    def test_unreadable(self, run):
        code, _, err = run("analyze", "--in", "missing.csv", "--out-prefix", "a")
        assert code == 2 and "--in" in err

    def test_malformed(self, run, tmp_path):
        (tmp_path / "bad.csv").write_text("# fs_hz=10\n1\nnope\n")
        code, _, err = run("analyze", "--in", "bad.csv", "--out-prefix", "a")
        assert code == 2 and "line 3" in err


class TestTrainClassify:
    def test_train_outputs(self, trained):
        loss = (trained / "model.txt.loss.csv").read_text().splitlines()
        assert loss[0] == "epoch,loss" and len(loss) == 201
        values = [float(r.split(",")[1]) for r in loss[1:]]
        assert values[-1] < values[0] / 10
        assert (trained / "model.txt.manifest.json").exists()

    def test_zero_vector_is_healthy(self, run, trained, tmp_path):
        header = (trained / "data.csv").read_text().splitlines()[:2]
        (tmp_path / "zero.csv").write_text("\n".join(header) + "\n," + ",".join(["0"] * 10) + "\n")
        code, out, _ = run("classify", "--model", trained / "model.txt", "--features", "zero.csv")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "label,confidence,uncertain_flag"
        assert lines[1].startswith("healthy,")

    def test_synthesized_capture_end_to_end(self, run, trained):
        run(*SYNTH_THIRTY[:-6], "--n", "3900", "--noise", "0.02", "--seed", "4", "--out", "w.csv")
        assert run("analyze", "--in", "w.csv", "--grid-from", "flags", "--ns", "3000", "--nr", "2500",
                   "--out-prefix", "live")[0] == 0
        code, out, _ = run("classify", "--model", trained / "model.txt", "--features", "live.features.csv")
        assert code == 0
        assert out.splitlines()[1].startswith("inter_turn_severe,")

    def test_wrong_width(self, run, trained, tmp_path):
        (tmp_path / "narrow.csv").write_text("# layout=1:negative;1:positive\nlabel,v1,v2\n,0,0\n")
        code, _, err = run("classify", "--model", trained / "model.txt", "--features", "narrow.csv")
        assert code == 2 and "width" in err

    def test_divergence_exit_3(self, run, tmp_path):
        run("dataset", "--per-case", "5", "--n", "390", "--out", "d.csv")
        code, _, err = run("train", "--data", "d.csv", "--lr", "1e308", "--epochs", "5", "--out", "m.txt")
        assert code == 3
        assert "epoch 1" in err

    def test_missing_data(self, run):
        assert run("train", "--data", "nope.csv", "--out", "m.txt")[0] == 2


class TestDaq:
    def test_round_trip(self, run, tmp_path):
        run("synth", "--amp", "5", "--n", "100", "--out", "w.csv")
        assert run("daq", "encode", "--in", "w.csv", "--channel", "current", "--out", "cap.txt")[0] == 0
        assert run("daq", "decode", "--in", "cap.txt", "--out", "back.csv")[0] == 0
        cap = parse_capture((tmp_path / "cap.txt").read_text())
        volts = read_waveform(tmp_path / "back.csv").samples
        np.testing.assert_allclose(volts, np.array(cap.codes) * 5 / 255, rtol=1e-15)
        source = read_waveform(tmp_path / "w.csv").samples / 2.5
        in_range = (source >= 0) & (source <= 5)
        assert np.max(np.abs(volts - source)[in_range]) <= 5 / 510 + 1e-12

    def test_zero_waveform(self, run, tmp_path):
        run("synth", "--amp", "0", "--n", "20", "--out", "z.csv")
        run("daq", "encode", "--in", "z.csv", "--out", "cap.txt")
        rows = (tmp_path / "cap.txt").read_text().splitlines()[4:]
        assert {r.split(",")[0] for r in rows} == {"00"}

    def test_swapped_capture(self, run, tmp_path):
        (tmp_path / "bad.txt").write_text("# DAQ-CAP v1\n# channel=0\n# fs_hz=10\nA5,010,0,101,1\n")
        code, _, err = run("daq", "decode", "--in", "bad.txt", "--out", "x.csv")
        assert code == 2 and "line 4" in err

    def test_malformed_capture(self, run, tmp_path):
        (tmp_path / "bad.txt").write_text("# DAQ-CAP v1\n# channel=0\n# fs_hz=10\nA5,1,1\n")
        code, _, err = run("daq", "decode", "--in", "bad.txt", "--out", "x.csv")
        assert code == 2 and "line 4" in err


class TestFixtures:
    def test_export_is_canonical(self, run, tmp_path):
        assert run("fixtures", "--out", "f.csv")[0] == 0
        assert (tmp_path / "f.csv").read_text() == fixture_path().read_text()
        code, out, _ = run("fixtures", "--check", "f.csv")
        assert code == 0 and "canonical=true" in out

    def test_non_canonical(self, run, tmp_path):
        (tmp_path / "f.csv").write_text(fixture_path().read_text().replace("0.396", "0.3960"))
        code, out, _ = run("fixtures", "--check", "f.csv")
        assert code == 1 and "canonical=false" in out


class TestDeterminism:
    def test_byte_identical_reruns(self, run, tmp_path):
        for tag in ("a", "b"):
            run(*SYNTH_THIRTY[:-2], "--noise", "0.02", "--seed", "3", "--out", f"{tag}.wfm")
            run("analyze", "--in", f"{tag}.wfm", "--out-prefix", tag)
        for suffix in ("wfm", "spectrum.csv", "features.csv", "peaks.csv", "summary.txt"):
            assert (tmp_path / f"a.{suffix}").read_bytes() == (tmp_path / f"b.{suffix}").read_bytes()

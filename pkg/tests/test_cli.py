import json
import subprocess
import sys

import numpy as np
import pytest

from fringe_fcs.cli import EXIT_BAD_INPUT, EXIT_CHECK_FAILED, EXIT_OK, run
from fringe_fcs.io import read_counts, read_csv, read_pgm


def write_cfg(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def call(cmd, cfg, out, *extra):
    return run([cmd, "--config", str(cfg), "--out", str(out), *map(str, extra)])


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


PAIR = "cloud1.n = 1\ncloud2.n = 1\nbins.k = 2\n"

# p_exact for N1 = N2 = 1, K = 2, default geometry, pinned from a reference run
PAIR_REFERENCE = [2.3181684722633647e-01, 5.3636612702193287e-01, 2.3181684722633633e-01]


class TestExact:
    def test_pair_probabilities(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", PAIR)
        assert call("exact", cfg, tmp_path / "o") == EXIT_OK
        header, rows = read_csv(tmp_path / "o" / "probabilities.csv")
        assert header == ["snapshot_id", "n_1", "n_2", "p_exact", "p_bruteforce", "p_lambda"]
        assert len(rows) == 3
        p = np.array([float(r[3]) for r in rows])
        assert abs(p.sum() - 1) < 1e-6
        np.testing.assert_allclose(p, PAIR_REFERENCE, rtol=0, atol=1e-12)
        m = manifest(tmp_path / "o")
        assert m["passed"] and m["command"] == "exact" and m["files"] == ["probabilities.csv"]

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", "cloud1.n = 2\ncloud2.n = 1\nbins.k = 3\n")
        call("exact", cfg, tmp_path / "a", "--seed", 5)
        call("exact", cfg, tmp_path / "b", "--seed", 5)
        a = (tmp_path / "a" / "probabilities.csv").read_bytes()
        assert a == (tmp_path / "b" / "probabilities.csv").read_bytes()
        assert manifest(tmp_path / "a")["config_hash"] == manifest(tmp_path / "b")["config_hash"]

    def test_out_of_domain_oracles_left_blank(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", "cloud1.n = 3\ncloud2.n = 3\nbins.k = 2\n")
        assert call("exact", cfg, tmp_path / "o") == EXIT_OK
        _, rows = read_csv(tmp_path / "o" / "probabilities.csv")
        assert len(rows) == 7 and all(r[4] == "" and r[5] == "" for r in rows)

    def test_disagreement_exits_nonzero(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", PAIR + "exact.oracle_tol = 1e-12\n")
        assert call("exact", cfg, tmp_path / "o") == EXIT_CHECK_FAILED
        header, rows = read_csv(tmp_path / "o" / "diagnostics.csv")
        assert header[:2] == ["snapshot_id", "route"] and rows
        assert not manifest(tmp_path / "o")["checks"]["oracle_bruteforce"]["passed"]

    def test_enumeration_cap(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", "")
        assert call("exact", cfg, tmp_path / "o") == EXIT_BAD_INPUT
        assert "max_snapshots" in capsys.readouterr().err


class TestSample:
    def test_single_bin_single_shot(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", "cloud1.n = 30\ncloud2.n = 12\nbins.k = 1\n")
        assert call("sample", cfg, tmp_path / "o", "--shots", 1) == EXIT_OK
        assert (tmp_path / "o" / "shots.csv").read_text() == "shot_index,n_1\n0,42\n"
        assert not (tmp_path / "o" / "hidden.csv").exists()

    def test_image_shows_fringes(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", "sample.image_height = 4\n")
        assert call("sample", cfg, tmp_path / "o", "--shots", 1, "--seed", 3) == EXIT_OK
        img = read_pgm(tmp_path / "o" / "images" / "shot_000000.pgm")
        assert img.shape == (4, 64) and img.max() == 255
        row = img[0].astype(int)
        peaks = [i for i in range(1, 63) if row[i] > row[i - 1] and row[i] >= row[i + 1] and row[i] > 12]
        assert len(peaks) >= 3

    def test_hidden_phases_only_in_calibration_mode(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", "sample.calibration = true\nsample.images = false\n")
        assert call("sample", cfg, tmp_path / "o", "--shots", 5, "--pin-theta", 1.5) == EXIT_OK
        header, rows = read_csv(tmp_path / "o" / "hidden.csv")
        assert header == ["shot_index", "theta"] and {float(r[1]) for r in rows} == {1.5}
        header, _ = read_csv(tmp_path / "o" / "shots.csv")
        assert "theta" not in header

    def test_workers_do_not_change_files(self, tmp_path, monkeypatch):
        cfg = write_cfg(tmp_path / "c.cfg", "bins.k = 32\n")
        call("sample", cfg, tmp_path / "a", "--shots", 40, "--workers", 1)
        call("sample", cfg, tmp_path / "b", "--shots", 40, "--workers", 8)
        monkeypatch.setenv("FRINGE_FCS_THREADS", "3")
        call("sample", cfg, tmp_path / "c", "--shots", 40, "--workers", 8)
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        for name in files:
            if name.name == "manifest.json":
                continue
            ref = (tmp_path / "a" / name).read_bytes()
            assert ref == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
        assert manifest(tmp_path / "a")["config_hash"] == manifest(tmp_path / "b")["config_hash"]


class TestEstimate:
    def test_pinned_input_peaks_at_the_pin(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", "sample.images = false\n")
        call("sample", cfg, tmp_path / "o", "--shots", 200, "--pin-theta", 2.0)
        assert call("estimate", cfg, tmp_path / "o") == EXIT_OK
        header, rows = read_csv(tmp_path / "o" / "estimates.csv")
        assert header == ["shot_index", "theta_hat", "residual", "sigma_cr", "status"]
        assert len(rows) == 200 and all(r[4] == "ok" for r in rows)
        _, hist = read_csv(tmp_path / "o" / "p_theta_hist.csv")
        centers = np.array([float(r[0]) for r in hist])
        counts = np.array([int(r[1]) for r in hist])
        assert centers[np.argmax(counts)] == pytest.approx(2.0, abs=np.pi / 16)
        assert manifest(tmp_path / "o")["results"]["uniformity"] == "non-uniform"

    def test_empty_input(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", "")
        (tmp_path / "empty.csv").write_text("")
        assert call("estimate", cfg, tmp_path / "o", "--input", tmp_path / "empty.csv") == EXIT_BAD_INPUT
        assert "empty input" in capsys.readouterr().err

    def test_bin_count_mismatch(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", "bins.k = 8\nsample.images = false\n")
        call("sample", cfg, tmp_path / "o", "--shots", 3)
        other = write_cfg(tmp_path / "d.cfg", "bins.k = 16\n")
        assert call("estimate", other, tmp_path / "o") == EXIT_BAD_INPUT
        assert "bins" in capsys.readouterr().err

    def test_degenerate_rows_flagged(self, tmp_path):
        text = "cloud1.d = 20\ncloud2.d = 20\ncloud1.tau = 0\ncloud2.tau = 0\nsample.images = false\n"
        cfg = write_cfg(tmp_path / "c.cfg", text)
        call("sample", cfg, tmp_path / "o", "--shots", 4)
        assert call("estimate", cfg, tmp_path / "o") == EXIT_OK
        _, rows = read_csv(tmp_path / "o" / "estimates.csv")
        assert len(rows) == 4 and all(r[4] == "degenerate" and r[1] == "" for r in rows)


class TestFisher:
    def test_default_sweep(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", "")
        assert call("fisher", cfg, tmp_path / "o") == EXIT_OK
        _, rows = read_csv(tmp_path / "o" / "fisher.csv")
        assert len(rows) == 64 and max(float(r[3]) for r in rows) < 1e-8
        header, rows = read_csv(tmp_path / "o" / "scaling.csv")
        assert header[:4] == ["N1", "N2", "sigma_cr", "asymptotic"]
        n = np.array([float(r[0]) for r in rows])
        sig = np.array([float(r[2]) for r in rows])
        assert np.polyfit(np.log(n * n), np.log(sig), 1)[0] == pytest.approx(-0.25, abs=0.01)

    def test_zero_information_rows_flagged(self, tmp_path):
        text = "cloud1.d = 20\ncloud2.d = 20\ncloud1.tau = 0\ncloud2.tau = 0\n"
        cfg = write_cfg(tmp_path / "c.cfg", text)
        assert call("fisher", cfg, tmp_path / "o") == EXIT_OK
        for name in ("fisher.csv", "scaling.csv"):
            _, rows = read_csv(tmp_path / "o" / name)
            assert rows and all(r[-1] == "zero-information" for r in rows)


def test_bad_config_exit(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg", "cloud1.a = -1\n")
    assert call("fisher", cfg, tmp_path / "o") == EXIT_BAD_INPUT
    assert "a > 0" in capsys.readouterr().err


def test_console_script(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", PAIR)
    proc = subprocess.run([sys.executable, "-m", "fringe_fcs", "exact", "--config", str(cfg),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "manifest.json").exists()

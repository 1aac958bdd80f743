import csv
import io

import numpy as np
import pytest

from topkrank import cli
from topkrank.exceptions import InvalidConfigError
from topkrank.experiments import ExperimentConfig, TRAJECTORY_HEADER
from topkrank.sampling import MixtureDistribution


def run_cli(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out=out)
    return code, out.getvalue()


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_ten_rows(tmp_path):
    code, text = run_cli("run", "--horizon", "10", "--synthetic", "6,3,0.1", "--out-dir", str(tmp_path))
    assert code == 0 and "10 rounds" in text
    rows = read_rows(tmp_path / "trajectory.csv")
    assert tuple(rows[0]) == TRAJECTORY_HEADER
    assert len(rows) == 11
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 11))
    summary = (tmp_path / "summary.txt").read_text()
    assert "final_avg_ndcg_at_k = " in summary and "horizon = 10" in summary


def test_avg_column_is_running_mean(tmp_path):
    run_cli("run", "--horizon", "200", "--surrogate", "kl", "--out-dir", str(tmp_path))
    rows = read_rows(tmp_path / "trajectory.csv")[1:]
    ndcg = np.array([float(r[2]) for r in rows])
    avg = np.array([float(r[3]) for r in rows])
    # every synthetic query has a relevant document, so the mean is over all rounds
    np.testing.assert_allclose(avg, np.cumsum(ndcg) / np.arange(1, 201), rtol=0, atol=1e-12)
    assert set(r[4] for r in rows) <= {"0", "1"}
    assert all(float(r[5]) <= 10.0 + 1e-9 for r in rows)


@pytest.mark.parametrize("extra", [(), ("--baseline", "full_listnet"), ("--baseline", "random_ranker"),
                                   ("--surrogate", "smoothdcg")])
def test_reruns_are_byte_identical(tmp_path, extra):
    def args(seed, name):
        return ["run", "--horizon", "300", "--seed", seed, *extra, "--out-dir", str(tmp_path / name)]

    run_cli(*args("7", "a"))
    run_cli(*args("7", "b"))
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectory.csv").read_bytes()
    run_cli(*args("8", "c"))
    # full-feedback ListNet uses no randomness at all
    seeded = "full_listnet" not in extra
    assert (a != (tmp_path / "c" / "trajectory.csv").read_bytes()) == seeded


def test_run_with_comparator(tmp_path):
    code, _ = run_cli("run", "--horizon", "100", "--comparator", "--out-dir", str(tmp_path))
    assert code == 0
    summary = dict(
        line.split(" = ") for line in (tmp_path / "summary.txt").read_text().splitlines()
    )
    assert float(summary["regret"]) == pytest.approx(
        float(summary["cumulative_loss"]) - float(summary["hindsight_loss"])
    )
    assert summary["hindsight_certified"] == "true"


def test_run_rejects_non_convex_comparator(tmp_path, capsys):
    code, _ = run_cli("run", "--surrogate", "smoothdcg", "--comparator", "--out-dir", str(tmp_path))
    assert code != 0
    err = capsys.readouterr().err
    assert err.startswith("error:") and len(err.strip().splitlines()) == 1


def test_verify_impossibility():
    code, text = run_cli("verify", "impossibility")
    assert code == 0
    assert "(0.45, 0.45, 0.4)" in text
    assert "(0.3533, 0.3920, 0.3226)" in text and "(0.3339, 0.3339, 0.4000)" in text
    assert "PASS verdict: True" in text


@pytest.mark.parametrize("suite", ["marginals", "unbiased", "gradients"])
def test_verify_suites_pass(suite):
    code, text = run_cli("verify", suite)
    assert code == 0, text
    assert "FAIL" not in text


def test_verify_catches_corrupted_denominator(monkeypatch):
    original = MixtureDistribution.prefix_marginal

    def corrupted(self, prefix):
        return 1.01 * original(self, prefix)

    monkeypatch.setattr(MixtureDistribution, "prefix_marginal", corrupted)
    code, text = run_cli("verify", "unbiased")
    assert code != 0
    assert "FAIL unbiased squared" in text and "checks failed" in text


def test_regret_scan_single_horizon(tmp_path):
    code, _ = run_cli("regret-scan", "--horizons", "200", "--n-seeds", "2", "--out-dir", str(tmp_path))
    assert code == 0
    rows = read_rows(tmp_path / "regret_scan.csv")
    assert rows[0] == ["horizon", "regret", "regret_per_round", "regret_per_t23",
                       "hindsight_loss", "n_seeds"]
    assert len(rows) == 2
    horizon, regret, per_round, per_t23 = int(rows[1][0]), *map(float, rows[1][1:4])
    assert horizon == 200 and rows[1][5] == "2"
    assert per_round == pytest.approx(regret / 200)
    assert per_t23 == pytest.approx(regret / 200 ** (2 / 3))


def test_regret_scan_rejects_smoothdcg(tmp_path, capsys):
    code, _ = run_cli("regret-scan", "--surrogate", "smoothdcg", "--out-dir", str(tmp_path))
    assert code != 0
    assert "convex" in capsys.readouterr().err


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(surrogate="ranksvm", horizon=123, gamma=0.2, eta=None, radius=3.5,
                           synthetic=(7, 2, 0.05), horizons=(10, 100), shuffle=True,
                           baseline="random_ranker", data="some file.txt")
    path = tmp_path / "cfg.txt"
    cfg.write(path)
    assert ExperimentConfig.from_file(path) == cfg


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("# comment line\nsurrogate = kl   # trailing\nhorizon = 12\nseed=3\n\n")
    out_dir = tmp_path / "out"
    code, _ = run_cli("run", "--config", str(path), "--horizon", "5", "--out-dir", str(out_dir),
                      "--write-config", str(tmp_path / "resolved.txt"))
    assert code == 0
    resolved = ExperimentConfig.from_file(tmp_path / "resolved.txt")
    assert (resolved.surrogate, resolved.horizon, resolved.seed) == ("kl", 5, 3)
    assert len(read_rows(out_dir / "trajectory.csv")) == 6


@pytest.mark.parametrize("text", ["colour = red\n", "horizon\n", "horizon = many\n", "gamma = 0.7\n",
                                  "synthetic = 3,2\n", "horizons = 100,10\n"])
def test_bad_config_files(tmp_path, text):
    path = tmp_path / "cfg.txt"
    path.write_text(text)
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_file(path)
    code, _ = run_cli("run", "--config", str(path), "--out-dir", str(tmp_path))
    assert code != 0


def test_run_on_letor_file(tmp_path):
    lines = []
    rng = np.random.default_rng(0)
    for q in range(4):
        for _ in range(5):
            feats = " ".join(f"{j + 1}:{v:.3f}" for j, v in enumerate(rng.normal(size=3)))
            lines.append(f"{rng.integers(0, 3)} qid:{q} {feats}")
    data = tmp_path / "train.txt"
    data.write_text("\n".join(lines) + "\n")
    code, text = run_cli("parse", str(data))
    assert code == 0
    assert "queries = 4" in text and "documents = 20" in text and "features = 3" in text
    code, _ = run_cli("run", "--data", str(data), "--horizon", "9", "--out-dir", str(tmp_path / "o"))
    assert code == 0
    assert len(read_rows(tmp_path / "o" / "trajectory.csv")) == 10


def test_parse_reports_bad_line(tmp_path, capsys):
    data = tmp_path / "bad.txt"
    data.write_text("1 qid:1 1:0.5\nx qid:1 1:0.5\n")
    code, _ = run_cli("parse", "--data", str(data))
    assert code != 0
    assert "line 2" in capsys.readouterr().err


def test_missing_data_file(tmp_path):
    code, _ = run_cli("run", "--data", str(tmp_path / "nope.txt"), "--out-dir", str(tmp_path))
    assert code != 0

import json

import numpy as np
import pytest

from gdflow import metrics
from gdflow.cli import main, read_scores
from gdflow.data import read_labels

FAST = ["--n_drives", "10", "--epochs", "1", "--hidden", "6", "--stride", "5", "--embed_dim", "3"]


def run(*args) -> int:
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus, out = root / "corpus", root / "run"
    assert run("generate", "--out", corpus, "--seed", 7, *FAST) == 0
    assert run("train", "--corpus", corpus, "--out", out, "--seed", 7, *FAST) == 0
    assert run("score", "--checkpoint", out / "checkpoint.gdf", "--corpus", corpus, "--out", out) == 0
    return corpus, out


def test_generate_is_byte_identical(tmp_path, pipeline):
    corpus, _ = pipeline
    assert run("generate", "--out", tmp_path, "--seed", 7, *FAST) == 0
    for path in sorted(corpus.rglob("*.csv")):
        assert (tmp_path / path.relative_to(corpus)).read_bytes() == path.read_bytes()


def test_generate_label_count(tmp_path):
    assert run("generate", "--out", tmp_path, "--seed", 1, "--n_drives", 50, "--anomaly_ratio", 0.6) == 0
    labels = read_labels(tmp_path / "labels.csv")
    assert len(labels) == 50 and sum(labels.values()) == 30
    assert len(list((tmp_path / "drives").glob("*.csv"))) == 50


def test_preprocess_rebuilds_profiles(tmp_path, pipeline):
    corpus, _ = pipeline
    assert run("preprocess", "--input", corpus / "drives", "--out", tmp_path) == 0
    assert sorted(p.name for p in (tmp_path / "profiles").glob("*.csv")) == sorted(
        p.name for p in (corpus / "profiles").glob("*.csv")
    )


def test_train_outputs(pipeline):
    _, out = pipeline
    log_lines = (out / "train_log.csv").read_text().splitlines()
    assert log_lines[0] == "epoch,loss,val_f1_pa,val_auroc" and len(log_lines) == 2


def test_score_file(pipeline):
    _, out = pipeline
    text = (out / "scores.csv").read_text().splitlines()
    assert text[0] == "window_id,profile_id,start,score,decision"
    assert all(line.split(",")[-1] in ("normal", "anomalous") for line in text[1:])


def test_rescoring_is_identical(tmp_path, pipeline):
    corpus, out = pipeline
    assert run("score", "--checkpoint", out / "checkpoint.gdf", "--corpus", corpus, "--out", tmp_path) == 0
    assert (tmp_path / "scores.csv").read_bytes() == (out / "scores.csv").read_bytes()


def test_scoring_with_labels_uses_best_f1_threshold(tmp_path, pipeline):
    corpus, out = pipeline
    assert run("score", "--checkpoint", out / "checkpoint.gdf", "--corpus", corpus, "--out", tmp_path,
               "--labels", corpus / "labels.csv") == 0
    pids, _, scores = read_scores(tmp_path / "scores.csv")
    labels = read_labels(corpus / "labels.csv")
    tau, _ = metrics.best_f1_search(scores, [labels[p] for p in pids], pids)
    decisions = [line.rsplit(",", 1)[1] for line in (tmp_path / "scores.csv").read_text().splitlines()[1:]]
    assert decisions == ["anomalous" if s > tau else "normal" for s in scores]


def test_empty_corpus_scores_to_empty_file(tmp_path, pipeline):
    _, out = pipeline
    (tmp_path / "empty" / "profiles").mkdir(parents=True)
    assert run("score", "--checkpoint", out / "checkpoint.gdf", "--corpus", tmp_path / "empty", "--out", tmp_path) == 0
    assert (tmp_path / "scores.csv").read_text() == "window_id,profile_id,start,score,decision\n"


def test_evaluate_matches_library(tmp_path, pipeline, capsys):
    corpus, out = pipeline
    assert run("evaluate", "--scores", out / "scores.csv", "--labels", corpus / "labels.csv", "--out", tmp_path) == 0
    lines = (tmp_path / "metrics.txt").read_text().splitlines()
    record = json.loads(lines[-1])
    assert json.loads((tmp_path / "metrics.json").read_text()) == record
    kv = dict(line.split(" = ") for line in lines[:-1])
    assert set(kv) >= {"f1_pa", "tau", "auroc", "auprc"}
    pids, _, scores = read_scores(out / "scores.csv")
    labels = read_labels(corpus / "labels.csv")
    y = np.array([labels[p] for p in pids])
    assert record["auroc"] == metrics.auroc(scores, y)
    assert record["auprc"] == metrics.auprc(scores, y)
    assert (record["tau"], record["f1_pa"]) == metrics.best_f1_search(scores, y, pids)
    assert float(kv["auroc"]) == record["auroc"]


def write_scores(path, rows):
    with open(path, "w") as fh:
        fh.write("window_id,profile_id,start,score,decision\n")
        for i, (pid, score) in enumerate(rows):
            fh.write(f"{i},{pid},0,{score!r},\n")


def test_evaluate_perfect_and_constant(tmp_path):
    (tmp_path / "labels.csv").write_text("profile_id,label\na,0\nb,1\n")
    write_scores(tmp_path / "perfect.csv", [("a", 0.1), ("a", 0.2), ("b", 0.9)])
    assert run("evaluate", "--scores", tmp_path / "perfect.csv", "--labels", tmp_path / "labels.csv", "--out", tmp_path) == 0
    rec = json.loads((tmp_path / "metrics.json").read_text())
    assert rec["f1_pa"] == rec["auroc"] == rec["auprc"] == 1.0
    write_scores(tmp_path / "flat.csv", [("a", 0.5), ("b", 0.5), ("b", 0.5)])
    assert run("evaluate", "--scores", tmp_path / "flat.csv", "--labels", tmp_path / "labels.csv", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "metrics.json").read_text())["auroc"] == 0.5


def test_evaluate_per_timestamp(tmp_path):
    write_scores(tmp_path / "s.csv", [("test", 0.1), ("test", 0.9)])
    text = (tmp_path / "s.csv").read_text().replace("1,test,0,", "1,test,4,")
    (tmp_path / "s.csv").write_text(text)
    np.savetxt(tmp_path / "lab.csv", [0, 0, 0, 0, 1, 1, 0], fmt="%d")
    assert run("evaluate", "--scores", tmp_path / "s.csv", "--timestamp-labels", tmp_path / "lab.csv",
               "--window", 3, "--out", tmp_path) == 0
    assert json.loads((tmp_path / "metrics.json").read_text())["n_units"] == 7


def test_exit_codes(tmp_path, pipeline):
    corpus, out = pipeline
    assert run("train", "--corpus", corpus, "--out", tmp_path, "--q", 2.0) == 2
    assert run("score", "--checkpoint", tmp_path / "missing.gdf", "--corpus", corpus, "--out", tmp_path) == 3
    assert run("train", "--corpus", tmp_path / "nowhere", "--out", tmp_path) == 3
    (tmp_path / "labels.csv").write_text("profile_id,label\nzzz,1\n")
    assert run("evaluate", "--scores", out / "scores.csv", "--labels", tmp_path / "labels.csv", "--out", tmp_path) == 3
    assert run("evaluate", "--scores", out / "scores.csv", "--out", tmp_path) == 2


def test_numerical_failure_exit_code(tmp_path, pipeline, monkeypatch):
    from gdflow import model
    from gdflow.tensor import NonFiniteError

    def boom(self, windows):
        raise NonFiniteError("non-finite output from exp")

    monkeypatch.setattr(model.GdflowModel, "loss", boom)
    corpus, _ = pipeline
    assert run("train", "--corpus", corpus, "--out", tmp_path, *FAST) == 4


def test_benchmark_train_and_score(tmp_path):
    rng = np.random.default_rng(0)
    bench = tmp_path / "bench"
    bench.mkdir()
    base = np.sin(np.arange(200)[:, None] / 7.0 + np.arange(3))
    np.savetxt(bench / "train.csv", base + 0.05 * rng.normal(size=(200, 3)), delimiter=",")
    test = base[:120] + 0.05 * rng.normal(size=(120, 3))
    test[60:70] += 3.0
    labels = np.zeros(120, dtype=int)
    labels[60:70] = 1
    np.savetxt(bench / "test.csv", test, delimiter=",")
    np.savetxt(bench / "test_label.csv", labels, fmt="%d", delimiter=",")
    flags = ["--window", 20, "--stride", 10, "--epochs", 1, "--hidden", 4, "--train_split", 1.0]
    assert run("train", "--benchmark", bench, "--out", tmp_path, *flags) == 0
    assert run("score", "--checkpoint", tmp_path / "checkpoint.gdf", "--benchmark", bench, "--out", tmp_path) == 0
    assert run("evaluate", "--scores", tmp_path / "scores.csv", "--timestamp-labels", bench / "test_label.csv",
               "--window", 20, "--out", tmp_path) == 0

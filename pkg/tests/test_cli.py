import json

import pytest

from grouptype import cli
from grouptype.cli import main
from grouptype.metrics import compute_all, metrics_to_csv
from grouptype.model import Corpus
from grouptype.synth import SynthConfig, generate

INTERACTIONS = """\
# src dst kind photo time
a\tb\tcomment\tp1\t-
b\ta\tcomment\tp2\t-
a\tb\tcomment\tp1\t-
a\tc\tfavorite\tp3\t-
c\tc\tcomment\tp4\t-
a\tb\tcontact\t-\t-
a\tb\tcontact\t-\t-
d\ta\tcomment\t-\t-
"""
GROUPS = "g1\tdeclared\ta\ng1\tdeclared\tb\ng1\tdeclared\tc\nd1\tdetected\ta\nd1\tdetected\td\n"
TERMS = "g1\tpool\tcat\t3\ng1\tcomment\tcat\t1\ng1\tcomment\tdog\t1\nd1\tcomment\tsun\t2\n"
LABELS = "g1\tsocial\n"


def write_fixture(d, interactions=INTERACTIONS):
    d.mkdir(parents=True, exist_ok=True)
    (d / "interactions.tsv").write_text(interactions)
    (d / "groups.tsv").write_text(GROUPS)
    (d / "terms.tsv").write_text(TERMS)
    (d / "labels.tsv").write_text(LABELS)
    return d


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    cfg = SynthConfig(seed=5, n_users=800, n_social=30, n_topical=30, social_size_mean=12.0,
                      topical_size_mean=30.0, n_detected=40)
    generate(cfg).write(d)
    return d


# ---------------------------------------------------------------- validate

def test_validate_hand_counted_summary(tmp_path, capsys):
    d = write_fixture(tmp_path / "c")
    assert main(["validate", str(d), "--out", str(tmp_path / "v.json")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["users"] == 4
    assert summary["interactions"] == {"comment": 4, "favorite": 1, "contact": 1}
    assert summary["dyads"] == {"comment": 3, "favorite": 1, "contact": 1}
    assert summary["groups"] == {"declared": 1, "detected": 1}
    assert summary["labels"]["social"] == 1
    assert summary["terms"]["comment"] == {"groups": 2, "occurrences": 4, "distinct_tags": 3}
    assert summary["ingest"]["self_loops"]["comment"] == 1
    assert summary["ingest"]["duplicate_contacts"] == 1
    report = json.loads((tmp_path / "v.json").read_text())
    assert report["manifest"]["command"] == "validate"
    assert "wall_time" not in report["manifest"]
    assert "wall_time" in json.loads((tmp_path / "v.json.manifest.json").read_text())


def test_validate_contact_with_photo_exit_2(tmp_path, capsys):
    d = write_fixture(tmp_path / "c", INTERACTIONS + "a\tc\tcontact\tp9\t-\n")
    assert main(["validate", str(d)]) == 2
    err = capsys.readouterr().err
    assert "row 10" in err


def test_validate_missing_file_exit_2(tmp_path):
    assert main(["validate", "--interactions", str(tmp_path / "nope.tsv")]) == 2


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["overlap", "--detected", "x"]) == 1
    assert main(["validate"]) == 1
    assert main(["--threads", "0", "validate", str(tmp_path)]) == 1
    capsys.readouterr()


def test_help_documents_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args(["predict", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--features", "--labels", "--seed", "--top-k"):
        assert flag in out


def test_internal_error_exit_3(tmp_path, monkeypatch, capsys):
    d = write_fixture(tmp_path / "c")

    def boom(*a, **k):
        raise RuntimeError("bug")

    monkeypatch.setattr(cli, "compute_all", boom)
    assert main(["metrics", str(d), "--out", str(tmp_path / "m.csv")]) == 3
    capsys.readouterr()


# ---------------------------------------------------------------- metrics

def test_metrics_empty_corpus_header_only(tmp_path):
    (tmp_path / "interactions.tsv").write_text("a\tb\tcomment\t-\t-\n")
    out = tmp_path / "m.csv"
    assert main(["metrics", str(tmp_path), "--out", str(out)]) == 0
    assert out.read_text().count("\n") == 1


def test_metrics_rerun_identical_and_matches_library(synth_dir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--threads", "1", "metrics", str(synth_dir), "--out", str(a)]) == 0
    assert main(["--threads", "8", "metrics", str(synth_dir), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text() == metrics_to_csv(compute_all(Corpus.load_dir(synth_dir)))


def test_metrics_candidates_and_universe(synth_dir, tmp_path):
    uni = tmp_path / "ids.txt"
    uni.write_text("g0000\ng0001\ng0002\n")
    out = tmp_path / "m.csv"
    assert main(["metrics", str(synth_dir), "--out", str(out), "--universe", str(uni),
                 "--candidates", str(tmp_path / "cand.txt")]) == 0
    assert (tmp_path / "cand.txt").exists()


# ---------------------------------------------------------------- overlap

def test_overlap_command(synth_dir, tmp_path, capsys):
    out = tmp_path / "o.json"
    g = str(synth_dir / "groups.tsv")
    assert main(["overlap", "--detected", g, "--declared", g, "--seed", "2",
                 "--percentiles", "91,99", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["seed"] == 2 and rep["manifest"]["seed"] == 2
    assert set(rep["percentiles"]["real"][0]["percentiles"]) == {"91", "99"}
    assert main(["overlap", "--detected", g, "--declared", g, "--seed", "2",
                 "--percentiles", "abc"]) == 1
    capsys.readouterr()


def test_overlap_missing_origin_is_data_error(tmp_path, capsys):
    f = tmp_path / "g.tsv"
    f.write_text("g1\tdeclared\ta\n")
    assert main(["overlap", "--detected", str(f), "--declared", str(f), "--seed", "0"]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------- predict

@pytest.fixture(scope="module")
def features(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("feat") / "metrics.csv"
    assert main(["metrics", str(synth_dir), "--out", str(out)]) == 0
    return out


def test_predict_actions(features, synth_dir, tmp_path, capsys):
    labels = str(synth_dir / "labels.tsv")
    base = ["predict", "--features", str(features), "--seed", "1"]
    assert main(base[:1] + ["score"] + base[1:] + ["--out", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_text().startswith("group_id,score,prediction")
    assert main(base[:1] + ["train"] + base[1:] + ["--labels", labels, "--trees", "5",
                                                    "--out", str(tmp_path / "m.json")]) == 0
    assert json.loads((tmp_path / "m.json").read_text())["format"] == "grouptype-model"
    assert main(base[:1] + ["cv"] + base[1:] + ["--labels", labels, "--trees", "5", "--folds", "3",
                                                 "--out", str(tmp_path / "e.json")]) == 0
    rep = json.loads((tmp_path / "e.json").read_text())
    assert set(rep["summary"]) == {"score", "classifier", "classifier_chi2_top5"}
    assert main(base[:1] + ["rank"] + base[1:] + ["--labels", labels, "--top-k", "3",
                                                   "--out", str(tmp_path / "r.json")]) == 0
    assert len(json.loads((tmp_path / "r.json").read_text())["top_k"]) == 3
    capsys.readouterr()


def test_predict_without_labels_is_usage_error(features, capsys):
    assert main(["predict", "cv", "--features", str(features), "--seed", "0"]) == 1
    capsys.readouterr()


def test_predict_requires_seed(features, capsys):
    assert main(["predict", "score", "--features", str(features)]) == 1
    capsys.readouterr()


# ---------------------------------------------------------------- synth

def test_synth_generate_with_config(tmp_path, capsys):
    conf = tmp_path / "s.conf"
    conf.write_text("seed = 99\nn_users = 300\nn_social = 4\nn_topical = 4\n"
                    "social_size_mean = 8\ntopical_size_mean = 12\nn_detected = 3\n")
    assert main(["synth", "generate", "--config", str(conf), "--out", str(tmp_path / "a"),
                 "--seed", "1"]) == 0
    assert main(["synth", "generate", "--config", str(conf), "--out", str(tmp_path / "b"),
                 "--seed", "1"]) == 0
    for name in ("interactions.tsv", "groups.tsv", "terms.tsv", "labels.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "seed = 1" in (tmp_path / "a" / "synth.conf").read_text()
    capsys.readouterr()


def test_synth_env_config_and_errors(tmp_path, monkeypatch, capsys):
    conf = tmp_path / "s.conf"
    conf.write_text("n_users = 300\nn_social = 2\nn_topical = 2\nsocial_size_mean = 8\n"
                    "topical_size_mean = 12\nn_detected = 0\n")
    monkeypatch.setenv(cli.SYNTH_CONFIG_ENV, str(conf))
    assert main(["synth", "generate", "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert len((tmp_path / "a" / "labels.tsv").read_text().splitlines()) == 4
    conf.write_text("bogus = 1\n")
    assert main(["synth", "generate", "--out", str(tmp_path / "b"), "--seed", "1"]) == 1
    conf.write_text("social_reciprocity = 2\n")
    assert main(["synth", "generate", "--out", str(tmp_path / "b"), "--seed", "1"]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------- pipeline

def test_pipeline_end_to_end_and_deterministic(synth_dir, tmp_path, capsys):
    conf = tmp_path / "p.conf"
    conf.write_text("trees = 10\nfolds = 4\n")
    args = ["pipeline", str(synth_dir), "--config", str(conf), "--seed", "3"]
    assert main(["--threads", "1"] + args + ["--out", str(tmp_path / "a")]) == 0
    assert "auc" in capsys.readouterr().out
    assert main(["--threads", "8"] + args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("metrics.csv", "scores.csv", "eval_report.json", "overlap_report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = json.loads((tmp_path / "a" / "eval_report.json").read_text())
    assert 0 <= rep["summary"]["classifier"]["auc"] <= 1
    assert rep["manifest"]["config"]["trees"] == 10


def test_pipeline_without_labels_score_only(synth_dir, tmp_path, monkeypatch, capsys):
    conf = tmp_path / "p.conf"
    conf.write_text("trees = 5\n")
    monkeypatch.setenv(cli.CONFIG_ENV, str(conf))
    d = tmp_path / "nolab"
    d.mkdir()
    for name in ("interactions.tsv", "groups.tsv", "terms.tsv"):
        (d / name).write_bytes((synth_dir / name).read_bytes())
    assert main(["pipeline", str(d), "--out", str(tmp_path / "o"), "--seed", "0"]) == 0
    assert "score-only" in capsys.readouterr().err
    assert (tmp_path / "o" / "scores.csv").exists()
    assert not (tmp_path / "o" / "eval_report.json").exists()


def test_pipeline_stage_error_names_stage(tmp_path, monkeypatch, capsys):
    d = write_fixture(tmp_path / "c")

    def bad(*a, **k):
        raise ValueError("broken metrics")

    monkeypatch.setattr(cli, "compute_all", bad)
    assert main(["pipeline", str(d), "--out", str(tmp_path / "o"), "--seed", "0"]) == 2
    assert "stage metrics" in capsys.readouterr().err

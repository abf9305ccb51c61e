import hashlib
import json

import pytest

from choiceslate.cli import main
from choiceslate.config import RunConfig, load_config
from choiceslate.errors import ConfigError

SMALL = """\
[run]
seed = 3
[model]
filters = 5
bottleneck = 4
[train]
lr = 1e-2
epochs = 3
[simulate]
users = 150
topics = 12
group_size = 4
[sweep]
filters = 3,5
batch_sizes = 32
learning_rates = 1e-2
"""


def write_config(tmp_path, text=SMALL):
    path = tmp_path / "small.ini"
    path.write_text(text)
    return path


def run(cfg, out, *args):
    return main(["--config", str(cfg), "--out", str(out), *args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root)
    out = root / "run"
    for command in ("simulate", "prepare", "train", "evaluate", "optimize"):
        assert run(cfg, out, command) == 0, command
    return cfg, out


def test_pipeline_artifacts(pipeline):
    _, out = pipeline
    for name in (
        "log.tsv", "truth.bin", "dataset.engt", "model.caem", "logit.blgt", "loss_curve.tsv",
        "loss_curve.png", "report.csv", "report_topics.csv", "report_truth.csv",
        "comparison.png", "uplift.png", "slates.tsv",
    ):
        assert (out / name).stat().st_size > 0, name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["model.caem"]["stage"] == "train"
    report = (out / "report.csv").read_text().splitlines()
    assert report[0] == "model,bce,auc,mean_uplift,instances"
    assert [line.split(",")[0] for line in report[1:]] == ["choice_net", "binary_logit"]


def test_slates_have_five_topics(pipeline):
    _, out = pipeline
    lines = (out / "slates.tsv").read_text().splitlines()
    assert lines[-1].startswith("mean_uplift=")
    for line in lines[:-1]:
        user, method, topics, value = line.split("\t")
        assert method == "greedy"
        chosen = [int(t) for t in topics.split(",")]
        assert len(chosen) == 5 == len(set(chosen)) and all(0 <= t < 12 for t in chosen)
        assert 0 <= float(value) <= 5


def test_flags_after_command(pipeline, tmp_path):
    cfg, out = pipeline
    assert main(["optimize", "--config", str(cfg), "--out", str(out), "--model", "logit", "--no-figures"]) == 0
    assert "\tgreedy\t" in (out / "slates.tsv").read_text()


def test_stage_order_violation(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(cfg, tmp_path / "fresh", "train") == 2
    assert "prepare" in capsys.readouterr().err


def test_tampered_artifact_detected(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert run(cfg, out, "simulate") == 0
    (out / "log.tsv").write_text((out / "log.tsv").read_text().replace("u00000", "u99999", 1))
    assert run(cfg, out, "prepare") == 2
    assert "changed" in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(cfg, tmp_path / "o", "prepare", "--input", str(tmp_path / "absent.tsv")) == 2
    assert "absent.tsv" in capsys.readouterr().err


def test_corrupt_checkpoint_exit_code(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    for command in ("simulate", "prepare", "train"):
        assert run(cfg, out, command, "--no-figures") == 0
    raw = (out / "model.caem").read_bytes()
    (out / "model.caem").write_bytes(b"XXXXX" + raw[5:])
    # refresh the manifest so the loader, not the stage check, sees the damage
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["model.caem"]["sha256"] = hashlib.sha256((out / "model.caem").read_bytes()).hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest))
    assert run(cfg, out, "evaluate", "--no-figures") == 11


def test_sweep_two_rows(pipeline):
    cfg, out = pipeline
    assert run(cfg, out, "sweep", "--workers", "2") == 0
    lines = (out / "sweep.tsv").read_text().splitlines()
    assert lines[0] == "filters\tbatch_size\tlr\tvalid_bce"
    assert len(lines) == 4 and lines[-1].startswith("selected\t")
    assert (out / "sweep.png").exists()


def test_sweep_independent_of_workers(pipeline):
    cfg, out = pipeline
    assert run(cfg, out, "sweep", "--workers", "2", "--no-figures") == 0
    parallel = (out / "sweep.tsv").read_bytes()
    assert run(cfg, out, "sweep", "--no-figures") == 0
    assert (out / "sweep.tsv").read_bytes() == parallel


def test_cluster_rerun_identical(tmp_path):
    corpus = tmp_path / "tweets.tsv"
    rows = [f"a{i}\tcats purr meow whiskers" for i in range(20)] + [f"b{i}\tstocks bonds yield market" for i in range(20)]
    corpus.write_text("\n".join(rows) + "\n")
    cfg = write_config(tmp_path)
    outputs = []
    for name in ("one", "two"):
        assert run(cfg, tmp_path / name, "cluster", "--input", str(corpus)) == 0
        outputs.append([(tmp_path / name / f).read_bytes() for f in ("assignment.tsv", "topics.tsv", "topics.png")])
    assert outputs[0] == outputs[1]
    assert outputs[0][0].decode().splitlines()[-1] == "J=2"


def test_config_defaults():
    cfg = load_config(None)
    assert cfg == RunConfig()
    assert (cfg.period_hours, cfg.num_periods, cfg.history) == (12.0, 14, 4)
    assert (cfg.filters, cfg.lr, cfg.batch_size, cfg.epochs) == (20, 1e-5, 32, 50)
    assert (cfg.slate_size, cfg.min_tweets_per_user, cfg.engagement_kind) == (5, 20, "retweet")
    assert cfg.sweep_filters == (5, 10, 15, 20, 30)
    assert cfg.sweep_batch_sizes == (16, 32, 64, 128)
    assert cfg.sweep_learning_rates == (1e-3, 1e-4, 5e-5, 1e-5, 1e-6)


def test_config_file_and_seed_override(tmp_path):
    cfg = load_config(write_config(tmp_path), seed=9)
    assert cfg.seed == 9 and cfg.filters == 5 and cfg.sweep_filters == (3, 5)


@pytest.mark.parametrize(
    "text, match",
    [
        ("[model]\nwidth = 3\n", "unknown"),
        ("[train]\nlr = fast\n", "bad value"),
        ("[data]\nengagement_kind = bookmark\n", "engagement_kind"),
    ],
)
def test_config_errors(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(write_config(tmp_path, text))


def test_config_error_exit_code(tmp_path):
    assert run(write_config(tmp_path, "[model]\nwidth = 3\n"), tmp_path / "o", "simulate") == 2

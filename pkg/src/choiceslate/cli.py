"""Command-line entry point: ``choiceslate <command> [options]``.

Commands and the artifacts they write into ``--out``:

    simulate  log.tsv, truth.bin
    cluster   assignment.tsv, topics.tsv, topics.png
    prepare   dataset.engt
    train     model.caem, logit.blgt, loss_curve.tsv, loss_curve.png
    evaluate  report.csv, report_topics.csv, [report_truth.csv], comparison.png, uplift.png
    optimize  slates.tsv
    sweep     sweep.tsv, sweep.png

``manifest.json`` records a SHA-256 for every artifact together with the hash
of the inputs and settings that produced it; a stage refuses to read an
artifact that is missing or whose content no longer matches the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from . import plotting
from .config import RunConfig, load_config
from .errors import CheckpointError, ConfigError, InputError, StageOrderError
from .evaluation import evaluate_model, per_topic_breakdown, slate_uplifts, write_report, write_topic_breakdown
from .gsdmm import fit_gsdmm, read_corpus, topic_histogram, write_assignment
from .logit import LogitModel, load_logit, save_logit, train_logit
from .net import EngagementNet, load_checkpoint, mean_instance_bce, save_checkpoint, train, write_loss_curve
from .optimizer import optimize_slates
from .pipeline import (
    build_all_inputs,
    filter_users,
    read_dataset,
    read_log,
    split_periods,
    split_train_valid_test,
    write_dataset,
    write_log,
)
from .simulator import generate_log, read_truth, write_truth

log = logging.getLogger("choiceslate")

MANIFEST = "manifest.json"


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Workdir:
    """Output directory plus its artifact manifest."""

    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        path = root / MANIFEST
        self.manifest = json.loads(path.read_text()) if path.exists() else {}

    def path(self, name: str) -> Path:
        return self.root / name

    def require(self, name: str, producer: str) -> Path:
        path = self.path(name)
        entry = self.manifest.get(name)
        if not path.exists() or entry is None:
            raise StageOrderError(f"missing artifact {path}; run `{producer}` first")
        if entry["sha256"] != _sha(path):
            raise StageOrderError(f"artifact {path} changed since `{entry['stage']}` wrote it; rerun `{producer}`")
        return path

    def has(self, name: str) -> bool:
        return self.path(name).exists() and name in self.manifest

    def record(self, stage: str, key: str, names) -> None:
        for name in names:
            self.manifest[name] = {"stage": stage, "key": key, "sha256": _sha(self.path(name))}
        text = json.dumps(self.manifest, indent=2, sort_keys=True) + "\n"
        self.path(MANIFEST).write_text(text)

    def key(self, cfg: RunConfig, inputs, *settings: str) -> str:
        h = hashlib.sha256(cfg.digest(*settings).encode())
        for p in inputs:
            h.update(_sha(Path(p)).encode())
        return h.hexdigest()


# --------------------------------------------------------------------------
# stages


def cmd_simulate(cfg: RunConfig, wd: Workdir, args) -> int:
    sim = cfg.sim_config()
    events, truth = generate_log(sim)
    write_log(wd.path("log.tsv"), events)
    write_truth(wd.path("truth.bin"), truth)
    wd.record("simulate", wd.key(cfg, []), ["log.tsv", "truth.bin"])
    print(f"simulated {len(events)} records for {sim.num_users} users, J={sim.num_topics}")
    return 0


def cmd_cluster(cfg: RunConfig, wd: Workdir, args) -> int:
    src = Path(args.input or cfg.corpus_path or "")
    if not src.name:
        raise InputError("no corpus given; pass --input or set [paths] corpus")
    corpus = read_corpus(src)
    assignment = fit_gsdmm(corpus, cfg.clustering_config())
    write_assignment(wd.path("assignment.tsv"), corpus, assignment)
    hist = topic_histogram(assignment)
    wd.path("topics.tsv").write_text("topic\tdocuments\n" + "".join(f"{t}\t{c}\n" for t, c in hist))
    outputs = ["assignment.tsv", "topics.tsv"]
    if not args.no_figures:
        plotting.plot_topic_histogram(hist, wd.path("topics.png"))
        outputs.append("topics.png")
    wd.record("cluster", wd.key(cfg, [src]), outputs)
    print(f"J={assignment.topic_universe.num_topics}")
    return 0


def cmd_prepare(cfg: RunConfig, wd: Workdir, args) -> int:
    if args.input or cfg.log_path:
        src = Path(args.input or cfg.log_path)
    else:
        src = wd.require("log.tsv", "simulate")
    events = filter_users(read_log(src), cfg.min_tweets_per_user)
    tensor = split_periods(events, cfg.grid, cfg.num_topics or None, cfg.engagement_kind)
    write_dataset(wd.path("dataset.engt"), tensor, cfg.history)
    wd.record("prepare", wd.key(cfg, [src]), ["dataset.engt"])
    print(f"I={tensor.num_users} J={tensor.num_topics} periods={tensor.num_periods} T={cfg.history}")
    return 0


def _splits(cfg: RunConfig, wd: Workdir):
    tensor, T = read_dataset(wd.require("dataset.engt", "prepare"))
    if T != cfg.history:
        raise ConfigError(f"dataset was prepared with T={T}, config has history={cfg.history}")
    return tensor, split_train_valid_test(build_all_inputs(tensor, T), cfg.split)


def cmd_train(cfg: RunConfig, wd: Workdir, args) -> int:
    tensor, (tr, va, _) = _splits(cfg, wd)
    mcfg = cfg.model_config(tensor.num_topics)

    def progress(epoch, train_bce, valid_bce):
        log.info("epoch %d train_bce %.5f valid_bce %.5f", epoch, train_bce, valid_bce)

    result = train(tr, mcfg, cfg.train_config(), valid=va, on_epoch=progress)
    save_checkpoint(result.params, wd.path("model.caem"))
    save_logit(train_logit(tr, cfg.logit_config()), wd.path("logit.blgt"))
    write_loss_curve(wd.path("loss_curve.tsv"), result.curve)
    outputs = ["model.caem", "logit.blgt", "loss_curve.tsv"]
    if not args.no_figures and result.curve:
        plotting.plot_loss_curve(result.curve, wd.path("loss_curve.png"))
        outputs.append("loss_curve.png")
    wd.record("train", wd.key(cfg, [wd.path("dataset.engt")]), outputs)
    final = result.curve[-1] if result.curve else (0, result.initial_train_bce, float("nan"))
    print(f"trained {mcfg.J} topics: train_bce={final[1]:.5f} valid_bce={final[2]:.5f}")
    return 0


def _models(cfg: RunConfig, wd: Workdir, J: int):
    params = load_checkpoint(wd.require("model.caem", "train"), cfg.model_config(J))
    logit = load_logit(wd.require("logit.blgt", "train"), J, cfg.history)
    return EngagementNet(params), LogitModel(logit)


def cmd_evaluate(cfg: RunConfig, wd: Workdir, args) -> int:
    tensor, (_, _, te) = _splits(cfg, wd)
    net, logit = _models(cfg, wd, tensor.num_topics)
    n = cfg.slate_size
    # all slates are scored by the choice-aware net, as the most expressive model
    reports = [evaluate_model(m, te, n, scoring_model=net) for m in (net, logit)]
    write_report(wd.path("report.csv"), reports)
    write_topic_breakdown(wd.path("report_topics.csv"), {m.name: per_topic_breakdown(m, te) for m in (net, logit)})
    outputs = ["report.csv", "report_topics.csv"]
    truth_uplifts = {}
    if wd.has("truth.bin"):
        truth = read_truth(wd.require("truth.bin", "simulate")).aligned(tensor.user_ids)
        truth_reports = []
        for m in (net, logit):
            u = slate_uplifts(m, te, n, truth)
            truth_uplifts[m.name] = u
            base = evaluate_model(m, te)
            truth_reports.append(replace(base, mean_uplift=float(u.mean()), uplift_scorer="ground_truth"))
        write_report(wd.path("report_truth.csv"), truth_reports)
        outputs.append("report_truth.csv")
    if not args.no_figures:
        plotting.plot_model_comparison(reports, wd.path("comparison.png"))
        dists = truth_uplifts or {m.name: slate_uplifts(m, te, n, net) for m in (net, logit)}
        plotting.plot_uplift_distribution(dists, wd.path("uplift.png"), n)
        outputs += ["comparison.png", "uplift.png"]
    inputs = [wd.path(x) for x in ("dataset.engt", "model.caem", "logit.blgt")]
    wd.record("evaluate", wd.key(cfg, inputs), outputs)
    print(wd.path("report.csv").read_text(), end="")
    return 0


def cmd_optimize(cfg: RunConfig, wd: Workdir, args) -> int:
    tensor, (_, _, te) = _splits(cfg, wd)
    net, logit = _models(cfg, wd, tensor.num_topics)
    model = logit if args.model == "logit" else net
    # one slate per user, from each user's most recent context
    latest = te.take(np.flatnonzero(te.periods == te.periods.max()))
    results = optimize_slates(model, latest, cfg.slate_size, cfg.slate_method)
    lines = [
        f"{tensor.user_ids[u]}\t{r.method}\t{','.join(map(str, r.chosen))}\t{r.uplift:.6f}"
        for u, r in zip(latest.users, results)
    ]
    mean = float(np.mean([r.uplift for r in results])) if results else float("nan")
    lines.append(f"mean_uplift={mean:.6f}")
    wd.path("slates.tsv").write_text("\n".join(lines) + "\n")
    inputs = [wd.path(x) for x in ("dataset.engt", "model.caem", "logit.blgt")]
    wd.record("optimize", wd.key(cfg, inputs), ["slates.tsv"])
    print(lines[-1])
    return 0


def _sweep_point(cfg: RunConfig, tr, va, J: int, H: int, batch: int, lr: float) -> float:
    result = train(tr, cfg.model_config(J, H=H), cfg.train_config(lr=lr, batch_size=batch))
    return mean_instance_bce(result.params, va)


def cmd_sweep(cfg: RunConfig, wd: Workdir, args) -> int:
    tensor, (tr, va, _) = _splits(cfg, wd)
    grid = list(product(cfg.sweep_filters, cfg.sweep_batch_sizes, cfg.sweep_learning_rates))
    J = tensor.num_topics
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            futures = [pool.submit(_sweep_point, cfg, tr, va, J, *pt) for pt in grid]
            scores = [f.result() for f in futures]
    else:
        scores = [_sweep_point(cfg, tr, va, J, *pt) for pt in grid]
    best = int(np.argmin(scores))
    lines = ["filters\tbatch_size\tlr\tvalid_bce"]
    lines += [f"{h}\t{b}\t{lr:g}\t{s:.6f}" for (h, b, lr), s in zip(grid, scores)]
    h, b, lr = grid[best]
    lines.append(f"selected\tfilters={h}\tbatch_size={b}\tlr={lr:g}")
    wd.path("sweep.tsv").write_text("\n".join(lines) + "\n")
    outputs = ["sweep.tsv"]
    if not args.no_figures:
        plotting.plot_sweep([(f"H={h},B={b},lr={lr:g}", s) for (h, b, lr), s in zip(grid, scores)], wd.path("sweep.png"))
        outputs.append("sweep.png")
    wd.record("sweep", wd.key(cfg, [wd.path("dataset.engt")]), outputs)
    print(lines[-1])
    return 0


COMMANDS = {
    "cluster": cmd_cluster,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they never overwrite flags given before the command
    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=d(None), help="INI run configuration")
    common.add_argument("--seed", type=int, default=d(None), help="master seed (overrides [run] seed)")
    common.add_argument(
        "--workers", type=int, default=d(1), help="parallel workers (sweep only); outputs do not depend on it"
    )
    common.add_argument("--out", type=Path, default=d(Path("run")), help="artifact directory")
    common.add_argument("--no-figures", action="store_true", default=d(False), help="skip matplotlib figures")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choiceslate", description="Topic slate recommendation: simulate, cluster, prepare, train, evaluate, optimize, sweep.", parents=[_common_flags(False)]
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[_common_flags(True)])
        if name in ("cluster", "prepare"):
            p.add_argument("--input", type=Path, help="input file (corpus for cluster, log for prepare)")
        if name == "optimize":
            p.add_argument("--model", choices=("net", "logit"), default="net")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        return COMMANDS[args.command](cfg, Workdir(args.out), args)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InputError, ConfigError, StageOrderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

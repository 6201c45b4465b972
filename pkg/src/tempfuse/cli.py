"""Command line entry point: ``tempfuse <command> --config FILE``.

Exit codes: 0 success, 1 usage, 2 data or numerical error, 3 failed check.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import format_table, fuse_grows_linearly, minibatch_saves_memory, run_bench
from .config import ExperimentConfig
from .datasets import (FORMAT_VERSION, DynamicGraph, SplitSpec, load_dataset, load_negatives,
                       load_snapshots, pregenerate_eval_negatives,
                       save_snapshots, synthetic_dynamic_graph)
from .models import MODEL_NAMES
from .training import MetricsRecord, RunConfig, Trainer, evaluate_mrr, peak_rss_mb
from .verify import CHECKS, run_all

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3
CACHE_FILES = ("snapshots.bin", "val.negs", "test.negs")


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- cache ---------------------------------------------------------------
def build_dataset(cfg: ExperimentConfig) -> DynamicGraph:
    d = cfg.dataset
    if d.synthetic:
        return synthetic_dynamic_graph(d.num_nodes, d.base_pairs, d.delta_true, d.num_steps,
                                       d.generator_seed, d.split)
    path = cfg.dataset_path
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    try:
        return load_dataset(path, d.num_steps, SplitSpec(*d.split), d.format, d.mode, d.name)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


def ingest(cfg: ExperimentConfig, out=print) -> dict:
    cache = cfg.cache_path
    manifest_path = cache / "manifest.json"
    if not cfg.dataset.synthetic and not cfg.dataset_path.exists():
        raise DataError(f"dataset file not found: {cfg.dataset_path}")
    key = cfg.dataset_key()
    if manifest_path.exists() and all((cache / f).exists() for f in CACHE_FILES):
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("key") == key:
            out(f"cache up to date: {cache}")
            return manifest
    try:
        data = build_dataset(cfg)
    except ValueError as e:
        raise DataError(str(e)) from e
    cache.mkdir(parents=True, exist_ok=True)
    d = cfg.dataset
    save_snapshots(cache / "snapshots.bin", data.snapshots,
                   seed=d.generator_seed if d.synthetic else -1)
    for split in ("val", "test"):
        snaps = [data.snapshots[i] for i in data.target_indices(split)]
        pregenerate_eval_negatives(snaps, data.num_nodes, cfg.run.k_eval, d.neg_seed,
                                   path=cache / f"{split}.negs")
    manifest = {"name": data.name, "num_nodes": data.num_nodes,
                "num_steps": len(data.snapshots), "split": list(data.split.as_tuple()),
                "num_events": int(sum(s.num_edges for s in data.snapshots)),
                "k_eval": cfg.run.k_eval, "neg_seed": d.neg_seed, "seeds": list(cfg.seeds),
                "format_version": FORMAT_VERSION, "key": key}
    manifest_path.write_text(json.dumps(manifest, indent=2))
    out(f"ingested {data.name}: {data.num_nodes} nodes, {manifest['num_events']} events, "
        f"{len(data.snapshots)} steps {tuple(data.split.as_tuple())} -> {cache}")
    return manifest


def load_cache(cfg: ExperimentConfig):
    cache = cfg.cache_path
    manifest_path = cache / "manifest.json"
    if not manifest_path.exists():
        src = cfg.source or "CONFIG"
        raise DataError(f"no snapshot cache in {cache}; run `tempfuse ingest --config {src}` first")
    manifest = json.loads(manifest_path.read_text())
    missing = [f for f in CACHE_FILES if not (cache / f).exists()]
    if missing:
        raise DataError(f"cache in {cache} is incomplete (missing {', '.join(missing)}); "
                        "re-run ingest")
    snaps = load_snapshots(cache / "snapshots.bin")
    data = DynamicGraph(snaps, manifest["num_nodes"], SplitSpec(*manifest["split"]),
                        manifest["name"])
    return data, load_negatives(cache / "val.negs"), load_negatives(cache / "test.negs")


# -- training ------------------------------------------------------------
def run_tag(run: RunConfig) -> str:
    return run.model + ("-minibatch" if run.minibatch else "")


def train_seed(cfg: ExperimentConfig, run: RunConfig, seed: int) -> dict:
    """Train one seed; write its metrics file and best checkpoint."""
    data, val_neg, test_neg = load_cache(cfg)
    run = replace(run, seed=seed)
    tag = f"{run_tag(run)}-seed{seed}"
    metrics_dir = cfg.output_path / "metrics"
    ckpt_dir = cfg.output_path / "checkpoints"
    metrics_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = metrics_dir / f"{tag}.jsonl"
    with open(metrics_path, "w") as fh:
        def log(rec: MetricsRecord):
            fh.write(rec.to_json() + "\n")
            fh.flush()

        trainer = Trainer(run, data)
        trainer.fit(val_negatives=val_neg, log=log, checkpoint_dir=ckpt_dir / tag)
        t0 = time.perf_counter()
        test = evaluate_mrr(trainer, "test", test_neg)
        log(MetricsRecord(trainer.best_epoch, "test", float("nan"), test,
                          time.perf_counter() - t0, peak_rss_mb()))
    ckpt = ckpt_dir / f"{tag}.ckpt"
    trainer.save_state(ckpt)
    return {"seed": seed, "test_mrr": test, "best_epoch": trainer.best_epoch,
            "metrics": str(metrics_path), "checkpoint": str(ckpt)}


def _train_seed_args(args):
    return train_seed(*args)


def summarize(run: RunConfig, results: list[dict]) -> dict:
    scores = np.array([r["test_mrr"] for r in results])
    std = float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0
    return {"split": "summary", "model": run.model, "minibatch": run.minibatch,
            "seeds": [r["seed"] for r in results], "test_mrr": scores.tolist(),
            "mean": float(scores.mean()), "std": std, "runs": results}


def train_all(cfg: ExperimentConfig, run: RunConfig, jobs: int = 1, out=print) -> dict:
    load_cache(cfg)  # fail fast before spawning anything
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_seed_args, [(cfg, run, s) for s in cfg.seeds]))
    else:
        results = [train_seed(cfg, run, s) for s in cfg.seeds]
    for r in results:
        out(f"{run_tag(run)} seed {r['seed']}: test MRR@100 {100 * r['test_mrr']:.2f} "
            f"(best epoch {r['best_epoch']})")
    summary = summarize(run, results)
    path = cfg.output_path / f"summary-{run_tag(run)}.json"
    path.write_text(json.dumps(summary, indent=2))
    out(f"{run_tag(run)}: MRR@100 {100 * summary['mean']:.2f} ± {100 * summary['std']:.2f} "
        f"over {len(results)} seeds -> {path}")
    return summary


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint, out=print) -> dict:
    data, val_neg, test_neg = load_cache(cfg)
    checkpoint = Path(checkpoint)
    if not checkpoint.exists():
        raise DataError(f"checkpoint not found: {checkpoint}")
    meta = checkpoint.with_suffix(checkpoint.suffix + ".json")
    run = RunConfig.from_dict(json.loads(meta.read_text())["config"]) if meta.exists() else cfg.run
    trainer = Trainer(run, data).load_state(checkpoint)
    result = {"checkpoint": str(checkpoint), "model": run.model,
              "val_mrr100": evaluate_mrr(trainer, "val", val_neg),
              "test_mrr100": evaluate_mrr(trainer, "test", test_neg)}
    out(json.dumps(result))
    return result


# -- commands ------------------------------------------------------------
def cmd_ingest(args):
    ingest(ExperimentConfig.load(args.config))
    return EXIT_OK


def _run_config(cfg, args):
    run = cfg.run
    if getattr(args, "model", None):
        run = replace(run, model=args.model)
    if getattr(args, "minibatch", False):
        run = replace(run, minibatch=True)
    return run


def _jobs(cfg, args):
    if args.jobs is not None:
        return args.jobs
    return len(cfg.seeds) if cfg.parallel_seeds else 1


def cmd_train(args):
    cfg = ExperimentConfig.load(args.config)
    train_all(cfg, _run_config(cfg, args), _jobs(cfg, args))
    return EXIT_OK


def cmd_eval(args):
    evaluate_checkpoint(ExperimentConfig.load(args.config), args.checkpoint)
    return EXIT_OK


def cmd_ablate(args):
    cfg = ExperimentConfig.load(args.config)
    base = _run_config(cfg, args)
    rows = {}
    for model in ("gat", "hawkes-gat"):
        rows[model] = train_all(cfg, replace(base, model=model), _jobs(cfg, args))
    ratio = rows["hawkes-gat"]["mean"] / max(rows["gat"]["mean"], 1e-12)
    print(f"{'model':<12} {'mean':>8} {'std':>8}")
    for model, s in rows.items():
        print(f"{model:<12} {100 * s['mean']:>8.2f} {100 * s['std']:>8.2f}")
    print(f"ratio hawkes-gat/gat = {ratio:.2f}")
    (cfg.output_path / "ablation.json").write_text(json.dumps(
        {"gat": rows["gat"]["mean"], "hawkes-gat": rows["hawkes-gat"]["mean"], "ratio": ratio},
        indent=2))
    return EXIT_OK


def cmd_verify(args):
    results = run_all(args.only or None)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return EXIT_CHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_bench(args):
    cfg = ExperimentConfig.load(args.config)
    rows = run_bench(cfg.bench)
    table = format_table(rows)
    print(table)
    cfg.output_path.mkdir(parents=True, exist_ok=True)
    (cfg.output_path / "bench.txt").write_text(table + "\n")
    linear, memory = fuse_grows_linearly(rows), minibatch_saves_memory(rows)
    print(f"fuse time at most linear in w: {'yes' if linear else 'NO'}")
    print(f"mini-batch peak below full-batch: {'yes' if memory else 'NO'}")
    return EXIT_OK if linear and memory else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tempfuse", description="Hawkes temporal GNN link prediction")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(name, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", required=True, help="experiment INI file")
        return sp

    with_config("ingest", "parse, bin and cache a dataset").set_defaults(fn=cmd_ingest)
    for name, fn, help in (("train", cmd_train, "train one model over all seeds"),
                           ("ablate", cmd_ablate, "train gat and hawkes-gat and compare")):
        sp = with_config(name, help)
        if name == "train":
            sp.add_argument("--model", choices=MODEL_NAMES)
        sp.add_argument("--minibatch", action="store_true", help="neighbor-sampled batches")
        sp.add_argument("--jobs", type=int, help="seeds trained in parallel")
        sp.set_defaults(fn=fn)
    sp = with_config("eval", "evaluate a checkpoint on val and test")
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(fn=cmd_eval)
    sp = sub.add_parser("verify", help="run the property checks")
    sp.add_argument("--only", nargs="+", choices=list(CHECKS))
    sp.set_defaults(fn=cmd_verify)
    with_config("bench", "fuse/step time and memory against window length").set_defaults(
        fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except configparser.Error as e:
        print(f"error: bad config: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

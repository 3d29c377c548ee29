"""Command-line entry point: ``locle {select,run,eval,synth}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .active_select import select_active_nodes
from .annotate import API_KEY_ENV, AnnotationCache, LLMAnnotator, OracleAnnotator, PromptSpec
from .evalio import DatasetError, all_metrics, load_dataset, read_label_csv, write_dataset, write_predictions, write_report
from .pipeline import ConfigError, InsufficientSeeds, PipelineConfig, derived_seed, run_pipeline
from .synthetic import sbm_dataset

EXIT_INVALID = 2
EXIT_SEEDS = 3


class UsageError(Exception):
    pass


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return PipelineConfig.from_dict(data)


def cmd_select(args) -> int:
    cfg = load_config(args.config)
    ds = load_dataset(args.data)
    K = cfg.K if cfg.K is not None else ds.num_classes
    tau = min(cfg.tau, ds.n, ds.features.shape[1])
    sel = select_active_nodes(ds.graph, ds.features, T=cfg.T, alpha=cfg.alpha, tau=tau, K=K,
                              B_ini=cfg.B_ini, seed=derived_seed(cfg.seed, 0, 0),
                              decompose=cfg.decompose)
    out = {
        "K": K,
        "B_ini": cfg.B_ini,
        "centers": sel.centers,
        "members": sel.members,
        "closeness": {str(v): s for v, s in zip(sel.members, sel.scores)},
        "assignments": [int(a) for a in sel.assignments],
    }
    write_report(out, args.out)
    return 0


def _annotator(args, cfg: PipelineConfig, ds):
    if args.annotator == "oracle":
        if ds.ground_truth is None:
            raise UsageError("oracle annotator needs labels.csv in the dataset")
        return OracleAnnotator(ds.ground_truth, ds.num_classes, args.noise, seed=cfg.seed)
    if ds.texts is None:
        raise UsageError("llm annotator needs texts.jsonl in the dataset")
    key = os.environ.get(API_KEY_ENV)
    if not key:
        raise UsageError(f"llm annotator needs the {API_KEY_ENV} environment variable")
    s = cfg.llm
    spec_kw = {"class_names": tuple(ds.class_names), "class_explanations": s.class_explanations,
               "item_label": s.item_label, "max_text_tokens": s.max_text_tokens}
    if s.task_preamble is not None:
        spec_kw["task_preamble"] = s.task_preamble
    return LLMAnnotator(PromptSpec(**spec_kw), ds.texts, base_url=s.base_url, model=s.model,
                        api_key=key, temperature=s.temperature, timeout=s.timeout,
                        max_retries=s.max_retries, backoff_base=s.backoff_base)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    ds = load_dataset(args.data)
    annotator = _annotator(args, cfg, ds)
    cache = AnnotationCache(args.cache) if args.cache else None
    try:
        result = run_pipeline(ds, annotator, cfg, cache=cache)
    except InsufficientSeeds as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEEDS
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(result.report, out / "report.json")
    write_predictions(result.final_labels, out / "predictions.csv")
    if "final_metrics" in result.report:
        print(json.dumps(result.report["final_metrics"], sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    pred = read_label_csv(args.pred)
    truth = read_label_csv(args.truth)
    for a, b, name in ((truth, pred, args.pred), (pred, truth, args.truth)):
        missing = sorted(a.keys() - b.keys())
        if missing:
            raise UsageError(f"node id {missing[0]} missing from {name}")
    if not truth:
        raise UsageError("no labels to compare")
    ids = sorted(truth)
    p = np.array([pred[i] for i in ids])
    t = np.array([truth[i] for i in ids])
    k = int(max(p.max(), t.max())) + 1
    print(json.dumps(all_metrics(p, t, k), sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    ds = sbm_dataset(n=args.n, k=args.k, p_in=args.p_in, p_out=args.p_out, d=args.dim,
                     separation=args.separation, seed=args.seed)
    write_dataset(ds, args.out, binary_features=args.binary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locle", description="Label-free node classification with budgeted annotation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("select", help="write the Stage-I active node set")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    r = sub.add_parser("run", help="run the full pipeline")
    r.add_argument("--data", required=True)
    r.add_argument("--config")
    r.add_argument("--annotator", choices=("llm", "oracle"), default="oracle")
    r.add_argument("--noise", type=float, default=0.0, help="oracle label-flip probability")
    r.add_argument("--cache", help="JSONL annotation cache")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score a predictions file")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("synth", help="write a stochastic block model dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=600)
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--p-in", type=float, default=0.10)
    g.add_argument("--p-out", type=float, default=0.01)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--separation", type=float, default=1.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--binary", action="store_true", help="write features.bin")
    g.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

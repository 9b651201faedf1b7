"""Command line: ``kgbench {generate,create-graph,split,train,evaluate,pipeline}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import shutil
import sys
import tempfile

from .config import STAGES, PipelineConfig
from .errors import ConfigError, DataError, KGBenchError
from .ingest import build_graph, load_graph, read_edges, read_thresholds, save_graph
from .schema import read_schema

log = logging.getLogger("kgbench")


@contextlib.contextmanager
def stage_dir(out: str, name: str):
    """Build a stage's outputs in a scratch directory, then swap it in."""
    os.makedirs(out, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=f".{name}-", dir=out)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    final = os.path.join(out, name)
    if os.path.isdir(final):
        shutil.rmtree(final)
    os.replace(tmp, final)


def _require(path: str, key: str) -> str:
    if not path:
        raise ConfigError(f"config key {key!r} is required")
    if not os.path.exists(path):
        raise ConfigError(f"{key}: no such file: {path}")
    return path


def stage_create_graph(cfg: PipelineConfig) -> None:
    schema = read_schema(_require(cfg.schema, "schema"))
    thresholds = {}
    if cfg.thresholds or cfg.quality != "all":
        thresholds = read_thresholds(_require(cfg.thresholds, "thresholds"))
    options = cfg.graph_options(thresholds)
    targets = [("graph", cfg.edges, "edges")]
    if cfg.edges_new:
        targets.append(("graph_new", cfg.edges_new, "edges_new"))
    for name, edges, key in targets:
        raw, report = read_edges(_require(edges, key), schema)
        graph, report = build_graph(raw, schema, options, report)
        with stage_dir(cfg.out, name) as tmp:
            save_graph(graph, tmp, report)
        log.info("%s: %d positives, %d negatives, %d parse errors", name, len(graph.positives),
                 len(graph.negatives), len(report.errors))


def stage_split(cfg: PipelineConfig) -> None:
    from .split import random_split, time_slice_split, write_split

    spec = cfg.split_spec()
    graph = load_graph(_require(os.path.join(cfg.out, "graph"), "graph stage output"))
    if spec.mode == "time_slice":
        new = load_graph(_require(os.path.join(cfg.out, "graph_new"), "graph_new stage output (edges_new)"))
        split = time_slice_split(graph, new, spec)
    else:
        split = random_split(graph, spec)
    with stage_dir(cfg.out, "split") as tmp:
        write_split(split, tmp)
        save_graph(split.graph, os.path.join(tmp, "graph"))
    log.info("split: %s", split.report.sizes)


def _load_split(cfg: PipelineConfig):
    from .split import read_split

    directory = _require(os.path.join(cfg.out, "split"), "split stage output")
    graph = load_graph(os.path.join(directory, "graph"))
    return read_split(directory, graph)


def stage_train(cfg: PipelineConfig) -> None:
    from .embed import save_model, train

    split = _load_split(cfg)
    model, losses = train(cfg.model, split, cfg.hyperparams(), cfg.early_stop(),
                          log=lambda e, loss: log.debug("epoch %d loss %.6f", e, loss))
    with stage_dir(cfg.out, "model") as tmp:
        save_model(model, os.path.join(tmp, "model.tsv"))
        with open(os.path.join(tmp, "loss.tsv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(f"{i}\t{loss!r}\n" for i, loss in enumerate(losses)))
        with open(os.path.join(tmp, "metadata.tsv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("parallel_training\tfalse\n")
    log.info("train: %d epochs, final loss %s", len(losses), losses[-1] if losses else "n/a")


def stage_evaluate(cfg: PipelineConfig) -> None:
    from .embed import align_model, load_model
    from .metrics import evaluate, write_ranks
    from .protocol import evaluate_external

    split = _load_split(cfg)
    kwargs = dict(filtered=cfg.filtered, typed=cfg.typed_candidates, threads=cfg.threads)
    if cfg.scorer_cmd:
        report = evaluate_external(cfg.scorer_command(), split, cfg.k_list(), cfg.scorer_timeout, **kwargs)
    else:
        path = _require(os.path.join(cfg.out, "model", "model.tsv"), "model stage output")
        model = align_model(load_model(path), split.graph)
        report = evaluate(model, split, cfg.k_list(), **kwargs)
    with stage_dir(cfg.out, "eval") as tmp:
        report.write(os.path.join(tmp, "report.tsv"))
        if cfg.dump_ranks:
            write_ranks(report.records, split.graph, os.path.join(tmp, "ranks.tsv"))
    log.info("evaluate: hits@10=%s mrr=%s", report.get("hits@10"), report.get("mrr"))


STAGE_FUNCS = {
    "create-graph": stage_create_graph,
    "split": stage_split,
    "train": stage_train,
    "evaluate": stage_evaluate,
}


def run_pipeline(cfg: PipelineConfig, stages=None) -> None:
    """Run the selected stages in order; each reads the previous stage's files."""
    cfg.resolve()
    os.makedirs(cfg.out, exist_ok=True)
    tmp = os.path.join(cfg.out, ".config.resolved.txt.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.format())
    os.replace(tmp, os.path.join(cfg.out, "config.resolved.txt"))
    for stage in stages or cfg.stage_list():
        STAGE_FUNCS[stage](cfg)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--quality", choices=("high", "medium", "low", "all"))
    d = p.add_mutually_exclusive_group()
    d.add_argument("--directed", dest="directed", action="store_true", default=None)
    d.add_argument("--undirected", dest="directed", action="store_false")
    p.add_argument("--threads", type=int, help="worker threads (default: $KGBENCH_THREADS or 1)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgbench", description="link-prediction benchmark construction and evaluation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in STAGES + ("pipeline",):
        _common(sub.add_parser(name, help=f"run the {name} stage" if name != "pipeline" else "run all configured stages"))
    gen = sub.add_parser("generate", help="write a synthetic corpus (edges, schema, thresholds)")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--entities", default="GENE=150,DIS=150", help="node type sizes, e.g. GENE=150,DIS=150")
    gen.add_argument("--edges", type=int, default=3000)
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument("--planted-dim", type=int, default=8)
    gen.add_argument("--source-negatives", type=int, default=0)
    gen.add_argument("--schema", help="relation schema file (default: built-in six-relation schema)")
    gen.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    cfg.update(overrides, os.getcwd())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.quality is not None:
        cfg.quality = args.quality
    if args.directed is not None:
        cfg.directed = args.directed
    threads = args.threads
    if threads is None and os.environ.get("KGBENCH_THREADS"):
        try:
            threads = int(os.environ["KGBENCH_THREADS"])
        except ValueError:
            raise ConfigError("KGBENCH_THREADS must be an integer") from None
    if threads is not None:
        cfg.threads = threads
    return cfg


def _generate(args) -> None:
    from .synthetic import SyntheticSpec, default_relations, generate_synthetic

    counts = {}
    for item in args.entities.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--entities expects TYPE=N pairs, got {item!r}")
        try:
            counts[key.strip()] = int(value)
        except ValueError:
            raise ConfigError(f"bad entity count {value!r}") from None
    if args.schema:
        relations = list(read_schema(_require(args.schema, "schema")))
    else:
        types = list(counts)
        relations = default_relations(types[0], types[-1])
    spec = SyntheticSpec(entity_counts=counts, relations=relations, planted_dim=args.planted_dim,
                         edge_count=args.edges, noise=args.noise, seed=args.seed,
                         source_negatives=args.source_negatives)
    paths = generate_synthetic(spec, args.out)
    for key, path in paths.items():
        print(f"{key}\t{path}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        if args.command == "generate":
            _generate(args)
            return 0
        cfg = _config_from_args(args)
        stages = None if args.command == "pipeline" else [args.command]
        run_pipeline(cfg, stages)
        return 0
    except ConfigError as exc:
        print(f"kgbench: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"kgbench: data error: {exc}", file=sys.stderr)
        return 2
    except KGBenchError as exc:
        print(f"kgbench: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface: ``dnr rank|embed|classify|evaluate|rerun``.

Exit codes:
  0  success
  1  unexpected internal error
  2  usage error (unknown flag, missing argument)
  3  input file not found
  4  parameter out of range
  5  malformed input file
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, defaults
from .dnr import TrainConfig, classify_e2e, embed, train
from .evaluation import EvalProtocol, Pipeline, micro_macro_f1, predict_topk, run_protocol, split_nodes
from .graph import GraphFormatError, load_edge_list, load_labels, to_transition, write_node_map
from .neural import save_model
from .ppr import PPRConfig, ppr_batch

logger = logging.getLogger("deepnoderank")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISSING, EXIT_RANGE, EXIT_FORMAT = 0, 1, 2, 3, 4, 5


def _fail(code: int, kind: str, message: str) -> int:
    message = " ".join(str(message).split())
    print(f"dnr: error: code={code} kind={kind} message={message}", file=sys.stderr)
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.exit(_fail(EXIT_USAGE, "usage", message))


def _fmt(x) -> str:
    return "%.17g" % x


# argument groups

def _add_graph_args(p):
    p.add_argument("--graph", required=True, help="edge list: 'src dst [weight]' per line")
    p.add_argument("--directed", action="store_true", help="treat edges as directed (default: undirected)")
    p.add_argument("--unweighted", action="store_true", help="ignore a third weight column")
    p.add_argument("--out", required=True, help="output file")
    p.add_argument("--seed", type=int, default=0, help="master random seed (default: %(default)s)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for rank computation (default: available cores, %(default)s)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_ppr_args(p):
    g = p.add_argument_group("personalized PageRank")
    g.add_argument("--damping", type=float, default=defaults.DAMPING, help="continue probability (default: %(default)s)")
    g.add_argument("--epsilon", type=float, default=defaults.EPSILON, help="convergence bound (default: %(default)s)")
    g.add_argument("--max-steps", type=int, default=defaults.MAX_STEPS, help="iteration cap (default: %(default)s)")
    g.add_argument("--spread-step", type=int, default=defaults.SPREAD_STEP,
                   help="shrink probe step cap (default: %(default)s)")
    g.add_argument("--spread-percent", type=float, default=defaults.SPREAD_PERCENT,
                   help="shrink only below this fraction of nodes (default: %(default)s)")
    g.add_argument("--norm", choices=("l1", "l2"), default=defaults.NORM, help="residual norm (default: %(default)s)")
    g.add_argument("--no-shrink", action="store_true", help="disable the shrinking pre-pass")


def _add_train_args(p, default_fraction=None):
    g = p.add_argument_group("network training")
    g.add_argument("--labels", help="label file: 'node_id<TAB>label1,label2,...'")
    g.add_argument("--arch", choices=("plain", "conv", "attention"), default="plain",
                   help="architecture (default: %(default)s)")
    g.add_argument("--dim", type=int, default=defaults.EMBED_DIM, help="embedding size (default: %(default)s)")
    g.add_argument("--epochs", type=int, default=None,
                   help=f"maximum epochs (default: {defaults.MAX_EPOCHS}; {defaults.MAX_EPOCHS_ATTENTION} for attention)")
    g.add_argument("--batch", type=int, default=defaults.BATCH_SIZE, help="batch size (default: %(default)s)")
    g.add_argument("--patience", type=int, default=defaults.PATIENCE,
                   help="stop after this many epochs without improvement (default: %(default)s)")
    g.add_argument("--plateau-tol", type=float, default=defaults.PLATEAU_TOL, help="(default: %(default)s)")
    g.add_argument("--lr", type=float, default=defaults.LEARNING_RATE, help="Adam learning rate (default: %(default)s)")
    g.add_argument("--activation", choices=("relu", "leaky_relu", "elu", "sigmoid", "none"),
                   default=defaults.ACTIVATION, help="hidden activation (default: %(default)s)")
    g.add_argument("--conv", default=f"{defaults.CONV_FILTERS},{defaults.CONV_KERNEL},{defaults.CONV_POOL}",
                   help="filters,kernel,pool for --arch conv (default: %(default)s)")
    g.add_argument("--queue", type=int, default=defaults.QUEUE_CAPACITY,
                   help="rank batches buffered ahead of training (default: %(default)s)")
    if default_fraction is not None:
        g.add_argument("--train-fraction", type=float, default=default_fraction,
                       help="fraction of labeled nodes used for training (default: %(default)s)")
        g.add_argument("--train-nodes", help="file listing training node ids, one per line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dnr", allow_abbrev=False, description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"dnr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rank", help="personalized PageRank vectors", allow_abbrev=False)
    _add_graph_args(p)
    _add_ppr_args(p)
    p.add_argument("--seed-node", action="append", default=None,
                   help="node id to rank from (repeatable; default: every node)")
    p.add_argument("--format", choices=("dense", "sparse"), default="dense",
                   help="dense: seed then |N| values; sparse: 'seed target value' triplets")

    p = sub.add_parser("embed", help="train DNR and write node embeddings", allow_abbrev=False)
    _add_graph_args(p)
    _add_ppr_args(p)
    _add_train_args(p, defaults.CONSTRUCTION_FRACTION)
    p.add_argument("--mode", choices=("supervised", "unsupervised"), default="supervised")
    p.add_argument("--model-out", help="also write a JSON model checkpoint")

    p = sub.add_parser("classify", help="end-to-end node classification", allow_abbrev=False)
    _add_graph_args(p)
    _add_ppr_args(p)
    _add_train_args(p, 0.5)
    p.add_argument("--summary", help="JSON summary path (default: <out>.summary.json)")

    p = sub.add_parser("evaluate", help="train-fraction sweep with logistic regression or end-to-end DNR",
                       allow_abbrev=False)
    _add_graph_args(p)
    _add_ppr_args(p)
    _add_train_args(p)
    p.add_argument("--construction-fraction", type=float, default=defaults.CONSTRUCTION_FRACTION,
                   help="labeled nodes reserved for supervised network training (default: %(default)s)")
    p.add_argument("--pipeline", choices=("dnr-embed", "dnr-e2e", "embedding-file"), default="dnr-embed")
    p.add_argument("--mode", choices=("supervised", "unsupervised"), default="supervised",
                   help="embedding mode for --pipeline dnr-embed")
    p.add_argument("--embedding-file", help="TSV 'node_id v1 v2 ...' for --pipeline embedding-file")
    p.add_argument("--fractions", default=",".join(str(f) for f in defaults.TRAIN_FRACTIONS),
                   help="comma-separated classifier train fractions (default: %(default)s)")
    p.add_argument("--repeats", type=int, default=defaults.REPEATS, help="(default: %(default)s)")
    p.add_argument("--l2", type=float, default=defaults.L2_LAMBDA,
                   help="logistic regression L2 strength (default: %(default)s)")
    p.add_argument("--csv", help="also write result rows as CSV")
    p.add_argument("--no-timing", action="store_true",
                   help="leave wall-clock fields out of the report so reruns compare byte for byte")

    p = sub.add_parser("rerun", help="repeat a run from its manifest", allow_abbrev=False)
    p.add_argument("manifest")
    p.add_argument("--out", help="write to this path instead of the original output")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


# helpers

def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _ppr_config(a) -> PPRConfig:
    return PPRConfig(a.damping, a.epsilon, a.max_steps, a.spread_step, a.spread_percent, a.norm, not a.no_shrink)


def _train_config(a, mode) -> TrainConfig:
    try:
        f, k, p = (int(x) for x in a.conv.split(","))
    except ValueError:
        raise ValueError(f"--conv expects 'filters,kernel,pool', got {a.conv!r}") from None
    if a.threads < 1:
        raise ValueError("--threads must be >= 1")
    return TrainConfig(
        mode=mode, architecture=a.arch, embed_dim=a.dim, batch_size=a.batch, max_epochs=a.epochs,
        patience=a.patience, plateau_tol=a.plateau_tol, seed=a.seed, activation=a.activation,
        conv_filters=f, conv_kernel=k, conv_pool=p, learning_rate=a.lr, queue_capacity=a.queue,
        n_jobs=a.threads, ppr=_ppr_config(a),
    )


def _train_nodes(a, graph, labels, name="construction"):
    if a.train_nodes:
        with open(a.train_nodes, encoding="utf-8") as fh:
            ids = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
        try:
            return np.unique(graph.indices_of(ids))
        except KeyError as exc:
            raise GraphFormatError(f"unknown node in train-nodes file: {exc}", a.train_nodes) from None
    if not 0 < a.train_fraction < 1:
        raise ValueError(f"--train-fraction must lie in (0, 1), got {a.train_fraction}")
    train_idx, _ = split_nodes(labels.labeled, a.train_fraction, a.seed, name)
    return train_idx


def _need_labels(a, graph):
    if not a.labels:
        raise ValueError("--labels is required for this command")
    return load_labels(a.labels, graph)


# commands

def cmd_rank(a, stages):
    t0 = time.perf_counter()
    graph = load_edge_list(a.graph, directed=a.directed, weighted=not a.unweighted)
    cfg = _ppr_config(a)
    if a.threads < 1:
        raise ValueError("--threads must be >= 1")
    stages["load"] = time.perf_counter() - t0
    seeds = graph.indices_of(a.seed_node) if a.seed_node else np.arange(graph.n_nodes)
    t0 = time.perf_counter()
    vectors = ppr_batch(to_transition(graph), seeds, cfg, a.threads)
    stages["ranking"] = time.perf_counter() - t0
    names = graph.node_names
    with open(a.out, "w", encoding="utf-8") as fh:
        for vec in vectors:
            if a.format == "dense":
                fh.write(names[vec.seed] + "\t" + "\t".join(_fmt(x) for x in vec.values) + "\n")
            else:
                for j in np.flatnonzero(vec.values):
                    fh.write(f"{names[vec.seed]}\t{names[j]}\t{_fmt(vec.values[j])}\n")
    write_node_map(graph, a.out + ".nodes.tsv")
    unconverged = sum(not v.converged for v in vectors)
    if unconverged:
        logger.warning("%d rank vectors hit --max-steps before converging", unconverged)


def cmd_embed(a, stages):
    graph = load_edge_list(a.graph, directed=a.directed, weighted=not a.unweighted)
    mode = "supervised_embed" if a.mode == "supervised" else "unsupervised_embed"
    cfg = _train_config(a, mode)
    if mode == "supervised_embed":
        labels = _need_labels(a, graph)
        nodes = _train_nodes(a, graph, labels)
    else:
        labels, nodes = None, np.arange(graph.n_nodes)
    t0 = time.perf_counter()
    trained = train(graph, labels, nodes, cfg)
    stages["ranking"] = trained.rank_seconds
    stages["training"] = time.perf_counter() - t0 - trained.rank_seconds
    t0 = time.perf_counter()
    emb = embed(trained, graph)
    stages["embedding"] = time.perf_counter() - t0
    with open(a.out, "w", encoding="utf-8") as fh:
        for name, row in zip(graph.node_names, emb.values):
            fh.write(name + "\t" + "\t".join(_fmt(x) for x in row) + "\n")
    write_node_map(graph, a.out + ".nodes.tsv")
    if a.model_out:
        save_model(trained.model, a.model_out)
    return {"epochs_run": trained.epochs_run, "train_nodes": int(nodes.size)}


def cmd_classify(a, stages):
    graph = load_edge_list(a.graph, directed=a.directed, weighted=not a.unweighted)
    labels = _need_labels(a, graph)
    cfg = _train_config(a, "end_to_end")
    train_idx = _train_nodes(a, graph, labels, name="classify")
    held_out = np.setdiff1d(np.arange(graph.n_nodes), train_idx)
    t0 = time.perf_counter()
    trained = train(graph, labels, train_idx, cfg)
    stages["ranking"] = trained.rank_seconds
    stages["training"] = time.perf_counter() - t0 - trained.rank_seconds
    t0 = time.perf_counter()
    proba = classify_e2e(trained, graph, held_out)
    with open(a.out, "w", encoding="utf-8") as fh:
        for node, row in zip(held_out, proba):
            for c, p in enumerate(row):
                fh.write(f"{graph.node_names[node]}\t{labels.class_names[c]}\t{_fmt(p)}\n")
    counts = labels.counts()[held_out]
    scored = counts > 0
    summary = {
        "schema_version": defaults.SCHEMA_VERSION,
        "n_train": int(train_idx.size), "n_predicted": int(held_out.size), "n_scored": int(scored.sum()),
        "epochs_run": trained.epochs_run, "epoch_losses": trained.epoch_losses,
        "classes": list(labels.class_names),
    }
    if scored.any():
        pred = predict_topk(proba[scored], counts[scored])
        micro, macro = micro_macro_f1(pred, labels.matrix[held_out[scored]])
        summary.update(micro_f1=micro, macro_f1=macro)
    stages["evaluation"] = time.perf_counter() - t0
    with open(a.summary or a.out + ".summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    write_node_map(graph, a.out + ".nodes.tsv")
    return {k: summary[k] for k in ("micro_f1", "macro_f1") if k in summary}


def _read_embeddings(path, graph):
    E = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if E is None:
                E = np.zeros((graph.n_nodes, len(parts) - 1))
            if len(parts) - 1 != E.shape[1]:
                raise GraphFormatError("inconsistent embedding width", path, lineno)
            try:
                E[graph.index_of(parts[0])] = [float(x) for x in parts[1:]]
            except (KeyError, ValueError) as exc:
                raise GraphFormatError(str(exc), path, lineno) from None
    if E is None:
        raise GraphFormatError("embedding file is empty", path)
    return E


def cmd_evaluate(a, stages):
    graph = load_edge_list(a.graph, directed=a.directed, weighted=not a.unweighted)
    labels = _need_labels(a, graph)
    try:
        fractions = tuple(float(x) for x in a.fractions.split(",") if x.strip())
    except ValueError:
        raise ValueError(f"--fractions expects comma-separated numbers, got {a.fractions!r}") from None
    protocol = EvalProtocol(a.construction_fraction, fractions, a.repeats, a.l2, a.seed)
    if a.pipeline == "embedding-file":
        if not a.embedding_file:
            raise ValueError("--pipeline embedding-file needs --embedding-file")
        pipeline = Pipeline("embedding-file", embeddings=_read_embeddings(a.embedding_file, graph))
    elif a.pipeline == "dnr-e2e":
        pipeline = Pipeline("dnr-e2e", _train_config(a, "end_to_end"))
    else:
        mode = "supervised_embed" if a.mode == "supervised" else "unsupervised_embed"
        pipeline = Pipeline("dnr-embed", _train_config(a, mode))
    # cells run in parallel; results do not depend on the thread count
    pipeline.train_config = replace(pipeline.train_config, n_jobs=1)
    protocol = replace(protocol, n_jobs=a.threads)
    report = run_protocol(graph, labels, pipeline, protocol)
    stages.update(report.stage_seconds)
    with open(a.out, "w", encoding="utf-8") as fh:
        fh.write(report.to_json(timing=not a.no_timing))
    if a.csv:
        report.write_csv(a.csv)
    return {"aggregates": report.aggregates()}


COMMANDS = {"rank": cmd_rank, "embed": cmd_embed, "classify": cmd_classify, "evaluate": cmd_evaluate}
_INPUTS = ("graph", "labels", "train_nodes", "embedding_file")


def _execute(a) -> int:
    started = datetime.now(timezone.utc).isoformat()
    stages: dict = {}
    result = COMMANDS[a.command](a, stages) or {}
    config = {k: v for k, v in vars(a).items() if k not in ("verbose",)}
    for k in _INPUTS:
        if config.get(k):
            config[k] = str(Path(config[k]).resolve())
    manifest = {
        "schema_version": defaults.SCHEMA_VERSION,
        "tool": "dnr",
        "version": __version__,
        "command": a.command,
        "config": config,
        "seed": a.seed,
        "inputs": {k: {"path": str(Path(getattr(a, k)).resolve()), "sha256": _digest(getattr(a, k))}
                   for k in _INPUTS if getattr(a, k, None)},
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "stage_seconds": stages,
        "result": result,
    }
    with open(a.out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
    return EXIT_OK


def _from_manifest(a) -> argparse.Namespace:
    with open(a.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("tool") != "dnr" or manifest.get("command") not in COMMANDS:
        raise ValueError(f"{a.manifest} is not a dnr run manifest")
    for key, entry in manifest.get("inputs", {}).items():
        path = manifest["config"][key]
        if os.path.exists(path) and _digest(path) != entry["sha256"]:
            logger.warning("input %s changed since the manifest was written", path)
    ns = argparse.Namespace(**manifest["config"], verbose=a.verbose)
    if a.out:
        ns.out = a.out
    return ns


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if a.command == "rerun":
            a = _from_manifest(a)
        return _execute(a)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, "missing-file", f"{exc.filename}: {exc.strerror}")
    except GraphFormatError as exc:
        return _fail(EXIT_FORMAT, "format", exc)
    except KeyError as exc:
        return _fail(EXIT_FORMAT, "unknown-node", exc.args[0] if exc.args else exc)
    except (ValueError, IndexError) as exc:
        return _fail(EXIT_RANGE, "invalid-parameter", exc)
    except Exception as exc:  # pragma: no cover - last resort
        logger.debug("unhandled error", exc_info=True)
        return _fail(EXIT_INTERNAL, "internal", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())

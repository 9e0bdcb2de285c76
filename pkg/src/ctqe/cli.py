"""Command-line entry point: ``ctqe index|expand|search|eval|bench``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 provider/transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from ctqe.analysis import SubwordVocab
from ctqe.config import RETRIEVERS, ConfigError, PipelineConfig, load_config
from ctqe.evaluation import FormatError, RunFile, measure, ndcg_at_k, read_qrels, read_run, write_run
from ctqe.expansion import Expansion, FilterMode
from ctqe.index import CorpusError, build_index, read_corpus
from ctqe.llm import ProviderError
from ctqe.pipeline import Engine, index_paths

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PROVIDER = 0, 1, 2, 3

logger = logging.getLogger("ctqe")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats3(text: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers")
    return [float(p) for p in parts]


# flag dest -> dotted config key
OVERRIDES = {
    "retriever": "retriever",
    "top_k": "top_k",
    "index_dir": "index_dir",
    "alpha": "expansion.alpha",
    "repetition": "expansion.repetition",
    "mode": "expansion.mode",
    "expansion": "expansion.enabled",
    "provider": "generation.provider",
    "mock_script": "generation.mock_script",
    "endpoint": "generation.endpoint",
    "model": "generation.model",
    "cache_dir": "generation.cache_dir",
    "max_tokens": "generation.max_tokens",
    "temperature": "generation.temperature",
    "k": "generation.top_k_alternates",
    "prf": "prf.enabled",
    "prf_depth": "prf.depth",
    "prf_max_tokens": "prf.max_passage_tokens",
    "k1": "bm25.k1",
    "b": "bm25.b",
    "zero_top_n": "sparse.zero_top_n",
    "encoder_seed": "encoder.seed",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML pipeline config; flags override its values")
    p.add_argument("--name", help="config name used as run tag")
    p.add_argument("--retriever", choices=RETRIEVERS)
    p.add_argument("--index-dir")
    p.add_argument("--top-k", type=int, help="documents per query in the run")
    p.add_argument("--alpha", type=float, help="lexical interpolation weight")
    p.add_argument("-R", "--repetition", type=int, help="original-query repetition factor")
    p.add_argument("--mode", choices=[m.value for m in FilterMode])
    p.add_argument("--expansion", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--provider", choices=("mock", "http"))
    p.add_argument("--mock-script")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--cache-dir")
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("-k", type=int, help="alternates per decoding step (<= 20)")
    p.add_argument("--prf", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--prf-depth", type=int)
    p.add_argument("--prf-max-tokens", type=int)
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--dense-weights", type=_floats3, metavar="Q,W,C")
    p.add_argument("--sparse-weights", type=_floats3, metavar="Q,W,C")
    p.add_argument("--zero-top-n", type=int)
    p.add_argument("--encoder-seed", type=int)
    p.add_argument("--encoder-cmd", help="external encoder command (JSON lines over stdio)")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        key: getattr(args, dest) for dest, key in OVERRIDES.items() if getattr(args, dest) is not None
    }
    if args.name is not None:
        overrides["name"] = args.name
    if args.dense_weights is not None:
        for key, v in zip(("alpha_q", "alpha_w", "alpha_c"), args.dense_weights):
            overrides[f"dense.{key}"] = v
    if args.sparse_weights is not None:
        for key, v in zip(("beta_q", "beta_w", "beta_c"), args.sparse_weights):
            overrides[f"sparse.{key}"] = v
    if args.encoder_cmd is not None:
        overrides["encoder.command"] = args.encoder_cmd.split()
    try:
        return load_config(args.config, overrides)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def read_queries(path: str | Path) -> list[tuple[str, str]]:
    """``qid<TAB>text`` lines, or JSON lines with ``qid`` and ``text`` fields."""
    queries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                obj = json.loads(line)
                queries.append((str(obj["qid"]), obj["text"]))
                continue
            qid, sep, text = line.partition("\t")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected 'qid<TAB>query'")
            queries.append((qid, text))
    return queries


def _queries_from_args(args: argparse.Namespace) -> list[tuple[str, str]]:
    if args.query is not None:
        return [(args.qid, args.query)]
    return read_queries(args.queries)


def _dump(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def cmd_index(args: argparse.Namespace) -> int:
    if not Path(args.corpus).exists():
        raise FileNotFoundError(f"corpus not found: {args.corpus}")
    docs = read_corpus(args.corpus)
    vocab = SubwordVocab.load(args.vocab) if args.vocab else None
    word = build_index(docs, "word")
    subword = build_index(docs, "subword", vocab=vocab)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    word_path, subword_path = index_paths(out)
    word.save(word_path)
    subword.save(subword_path)
    print(
        f"indexed {word.num_docs} documents: {len(word.postings)} word terms, "
        f"{len(subword.postings)} subword terms -> {out}"
    )
    return EXIT_OK


def cmd_expand(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    queries = _queries_from_args(args)
    engine = Engine.open(cfg, args.index_dir or cfg.index_dir)
    effective = cfg.to_dict()
    lines = []
    for qid, query in queries:
        expansion = engine.expand(query)
        lines.append(_dump({"qid": qid, **expansion.to_dict(), "config": effective}))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def read_expansions(path: str | Path) -> list[tuple[str, Expansion]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append((str(obj["qid"]), Expansion.from_dict(obj)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: malformed expansion artifact ({exc})") from exc
    return out


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    engine = Engine.open(cfg, args.index_dir or cfg.index_dir)
    run = RunFile(tag=cfg.name)
    if args.expansions:
        for qid, expansion in read_expansions(args.expansions):
            run.add(qid, engine.search(expansion))
        report = None
    else:
        if cfg.expansion.enabled:
            engine.provider  # fail fast on a missing credential or script
        run, report = measure(engine.run, _queries_from_args(args), tag=cfg.name)
        if report.failures:
            logger.error("%d queries failed", len(report.failures))
    write_run(args.out, run)
    meta = {"config": cfg.to_dict(), "num_queries": len(run)}
    Path(f"{args.out}.config.json").write_text(_dump(meta) + "\n", encoding="utf-8")
    if report is not None and args.cost_out:
        Path(args.cost_out).write_text(_dump(report.to_dict()) + "\n", encoding="utf-8")
    if report is not None and report.failures and not run.rankings:
        raise ProviderError(next(iter(report.failures.values())))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if args.k < 1:
        raise UsageError(f"k must be >= 1, got {args.k}")
    result = ndcg_at_k(read_run(args.run), read_qrels(args.qrels), args.k)
    text = json.dumps(result.to_dict(args.k), sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def bench_rows(
    configs: Sequence[PipelineConfig],
    queries: list[tuple[str, str]],
    qrels: dict | None,
    index_dir: str | None,
    k: int = 10,
    runs_dir: str | None = None,
) -> list[dict]:
    rows = []
    for cfg in configs:
        engine = Engine.open(cfg, index_dir or cfg.index_dir)
        if cfg.expansion.enabled:
            engine.provider
        run, report = measure(engine.run, queries, tag=cfg.name)
        if runs_dir:
            Path(runs_dir).mkdir(parents=True, exist_ok=True)
            write_run(Path(runs_dir) / f"{cfg.name}.run", run)
        row = {
            "name": cfg.name,
            "retriever": cfg.retriever,
            "queries": len(report.records),
            "failures": len(report.failures),
            "mean_tokens": report.mean_tokens,
            "llm_s": report.mean_llm_latency,
            "retrieval_s": report.mean_retrieval_latency,
            "latency_s": report.mean_latency,
            f"ndcg@{k}": ndcg_at_k(run, qrels, k).mean if qrels is not None else None,
        }
        rows.append(row)
    return rows


def format_bench(rows: list[dict], k: int = 10) -> str:
    metric = f"ndcg@{k}"
    lines = [
        f"{'config':<20}{'retriever':<10}{'queries':>8}{'tokens':>8}{'llm_s':>9}"
        f"{'retr_s':>9}{'total_s':>9}{metric:>10}"
    ]
    for r in rows:
        ndcg = "-" if r[metric] is None else f"{r[metric]:.4f}"
        lines.append(
            f"{r['name']:<20}{r['retriever']:<10}{r['queries']:>8d}{r['mean_tokens']:>8.1f}"
            f"{r['llm_s']:>9.3f}{r['retrieval_s']:>9.3f}{r['latency_s']:>9.3f}{ndcg:>10}"
        )
    return "\n".join(lines)


def cmd_bench(args: argparse.Namespace) -> int:
    if args.k < 1:
        raise UsageError(f"k must be >= 1, got {args.k}")
    try:
        configs = [load_config(path) for path in (args.config or [None])]
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    queries = read_queries(args.queries)
    qrels = read_qrels(args.qrels) if args.qrels else None
    rows = bench_rows(configs, queries, qrels, args.index_dir, args.k, args.runs_dir) if queries else []
    print(format_bench(rows, args.k))
    if args.json_out:
        Path(args.json_out).write_text(_dump(rows) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctqe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index", help="build word and subword indexes from a JSONL corpus")
    p.add_argument("corpus")
    p.add_argument("--out-dir", default="index")
    p.add_argument("--vocab", help="newline-delimited subword vocabulary")
    p.set_defaults(func=cmd_index)

    for name, func, help_ in (
        ("expand", cmd_expand, "write expansion artifacts (JSON lines)"),
        ("search", cmd_search, "write a TREC run file"),
    ):
        p = sub.add_parser(name, help=help_)
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--query")
        group.add_argument("--queries", help="qid<TAB>text file")
        if name == "search":
            group.add_argument("--expansions", help="artifacts written by 'ctqe expand'")
            p.add_argument("--out", required=True)
            p.add_argument("--cost-out", help="write per-query token/latency report (JSON)")
        else:
            p.add_argument("--out")
        p.add_argument("--qid", default="q1", help="query id for --query")
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="nDCG@k of a run against qrels")
    p.add_argument("run")
    p.add_argument("qrels")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="compare token and latency cost of configs")
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels")
    p.add_argument("--index-dir")
    p.add_argument("--config", action="append", help="repeat for each config to compare")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--runs-dir", help="also write each config's run file here")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ctqe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderError as exc:
        print(f"ctqe: provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (CorpusError, FormatError, FileNotFoundError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        if isinstance(exc, FileNotFoundError) and exc.filename:
            msg = f"file not found: {exc.filename}"
        print(f"ctqe: data error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Compare candidate filtering modes: candidate counts and nDCG@k.

The three arms are every decoding step with duplicates kept (``all``),
every step deduplicated (``dedup``), and keyword-first steps only
deduplicated (``dedup_first_pos``).

Usage:
    python scripts/filter_ablation.py --index-dir index --queries tests/fixtures/queries.tsv \
        --qrels tests/fixtures/qrels.txt --mock-script tests/fixtures/mock_script.json
"""

from __future__ import annotations

import argparse

from ctqe.cli import read_queries
from ctqe.evaluation import RunFile, ndcg_at_k, read_qrels
from ctqe.expansion import CTQEConfig, FilterMode, rank_ctqe
from ctqe.index import BM25Params, InvertedIndex
from ctqe.llm import MockProvider
from ctqe.pipeline import index_paths
from ctqe.prf import expand_query


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--index-dir", default="index")
    parser.add_argument("--queries", required=True)
    parser.add_argument("--qrels", required=True)
    parser.add_argument("--mock-script", required=True)
    parser.add_argument("--alpha", type=float, default=0.9)
    parser.add_argument("--k", type=int, default=10)
    args = parser.parse_args()

    word_path, subword_path = index_paths(args.index_dir)
    word, subword = InvertedIndex.load(word_path), InvertedIndex.load(subword_path)
    provider = MockProvider.load(args.mock_script)
    qrels = read_qrels(args.qrels)
    queries = read_queries(args.queries)

    print(f"{'mode':<18}{'mean |C|':>10}{f'ndcg@{args.k}':>10}")
    for mode in FilterMode:
        cfg = CTQEConfig(alpha=args.alpha, mode=mode)
        run = RunFile(tag=mode.value)
        sizes = []
        for qid, query in queries:
            exp = expand_query(query, provider, ctqe_cfg=cfg, word_index=word)
            sizes.append(len(exp.candidates.tokens))
            run.add(qid, rank_ctqe(word, subword, BM25Params(), exp, cfg.alpha))
        mean_size = sum(sizes) / len(sizes) if sizes else 0.0
        print(f"{mode.value:<18}{mean_size:>10.1f}{ndcg_at_k(run, qrels, args.k).mean:>10.4f}")


if __name__ == "__main__":
    main()

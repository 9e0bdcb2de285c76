"""Sweep the lexical interpolation weight and report nDCG@k per value.

Usage:
    python scripts/alpha_sweep.py --index-dir index --queries tests/fixtures/queries.tsv \
        --qrels tests/fixtures/qrels.txt --mock-script tests/fixtures/mock_script.json
"""

from __future__ import annotations

import argparse
import json

from ctqe.cli import read_queries
from ctqe.evaluation import RunFile, ndcg_at_k, read_qrels
from ctqe.expansion import CTQEConfig, rank_ctqe
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
    parser.add_argument("--alphas", default="0,0.1,0.3,0.5,0.7,0.8,0.9,0.95,1.0")
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--json-out")
    args = parser.parse_args()

    word_path, subword_path = index_paths(args.index_dir)
    word, subword = InvertedIndex.load(word_path), InvertedIndex.load(subword_path)
    provider = MockProvider.load(args.mock_script)
    params = BM25Params()
    qrels = read_qrels(args.qrels)
    # expansions do not depend on alpha, so generate once
    expansions = {qid: expand_query(q, provider, word_index=word) for qid, q in read_queries(args.queries)}

    rows = []
    for alpha in (float(a) for a in args.alphas.split(",")):
        CTQEConfig(alpha=alpha)  # validates the range
        run = RunFile(tag=f"alpha{alpha}")
        for qid, exp in expansions.items():
            run.add(qid, rank_ctqe(word, subword, params, exp, alpha))
        rows.append({"alpha": alpha, f"ndcg@{args.k}": ndcg_at_k(run, qrels, args.k).mean})
        print(f"alpha={alpha:<5} ndcg@{args.k}={rows[-1][f'ndcg@{args.k}']:.4f}")
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()

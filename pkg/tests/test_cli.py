import json
import shutil
from pathlib import Path

import pytest

from ctqe.cli import main, read_queries
from ctqe.evaluation import ndcg_at_k, read_qrels, read_run
from ctqe.expansion import rank_ctqe, expand
from ctqe.index import InvertedIndex, search
from ctqe.llm import GenerationRequest, build_q2k_prompt, generate

GOLDEN = Path(__file__).parent / "fixtures" / "golden_expand_q1.jsonl"


@pytest.fixture
def work(tmp_path, fixtures_dir, monkeypatch):
    """A scratch directory holding the fixtures and a built index, used as cwd."""
    for name in ("corpus.jsonl", "queries.tsv", "qrels.txt", "mock_script.json",
                 "mock_fixed_16.json", "mock_fixed_32.json"):
        shutil.copy(fixtures_dir / name, tmp_path / name)
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CTQE_ABSENT_KEY", raising=False)
    assert main(["index", "corpus.jsonl", "--out-dir", "idx"]) == 0
    return tmp_path


def _search(*extra):
    return main(["search", "--queries", "queries.tsv", "--index-dir", "idx",
                 "--mock-script", "mock_script.json", *extra])


def test_index_roundtrip(work, word_index, subword_index):
    assert InvertedIndex.load(work / "idx" / "word.json") == word_index
    assert InvertedIndex.load(work / "idx" / "subword.json") == subword_index


def test_index_missing_corpus(work, capsys):
    assert main(["index", "nope.jsonl", "--out-dir", "x"]) == 2
    assert "nope.jsonl" in capsys.readouterr().err


def test_index_duplicate_doc_id(work, capsys):
    (work / "dup.jsonl").write_text('{"doc_id": "D7", "text": "a"}\n{"doc_id": "D7", "text": "b"}\n')
    assert main(["index", "dup.jsonl", "--out-dir", "x"]) == 2
    assert "duplicate doc_id: D7" in capsys.readouterr().err


def test_expand_matches_golden(work):
    assert main(["expand", "--query", "type 2 diabetes treatment", "--qid", "q1", "--index-dir", "idx",
                 "--mock-script", "mock_script.json", "--out", "exp.jsonl"]) == 0
    assert (work / "exp.jsonl").read_bytes() == GOLDEN.read_bytes()


def test_expand_artifact_contents(work):
    main(["expand", "--queries", "queries.tsv", "--index-dir", "idx", "--mock-script", "mock_script.json",
          "--out", "exp.jsonl"])
    rows = [json.loads(line) for line in (work / "exp.jsonl").read_text().splitlines()]
    assert [r["qid"] for r in rows] == ["q1", "q2", "q3"]
    q1 = rows[0]
    assert q1["keywords"][0]["text"] == "insulin resistance"
    assert "metformin" in q1["candidates"]
    assert q1["output_tokens"] == 7 and q1["config"]["expansion"]["alpha"] == 0.9


def test_expand_filter_modes_differ(work):
    main(["expand", "--query", "type 2 diabetes treatment", "--index-dir", "idx",
          "--mock-script", "mock_script.json", "--mode", "all", "--out", "all.jsonl"])
    main(["expand", "--query", "type 2 diabetes treatment", "--index-dir", "idx",
          "--mock-script", "mock_script.json", "--mode", "dedup_first_pos", "--out", "first.jsonl"])
    all_ = json.loads((work / "all.jsonl").read_text())["candidates"]
    first = json.loads((work / "first.jsonl").read_text())["candidates"]
    assert len(all_) > len(first) and len(all_) > len(set(all_))
    assert set(first) <= set(all_)


def test_http_without_credential(work, capsys):
    code = main(["expand", "--query", "q", "--index-dir", "idx", "--provider", "http"]
                + ["--config", str(_yaml(work, "http.yaml", "generation:\n  api_key_env: CTQE_ABSENT_KEY\n"))])
    assert code == 3
    assert "credential missing" in capsys.readouterr().err


def _yaml(work, name, body):
    path = work / name
    path.write_text(body)
    return path


def test_search_alpha_one_equals_q2k(work, word_index, params, provider, queries):
    assert _search("--alpha", "1.0", "--out", "a1.run") == 0
    run = read_run(work / "a1.run")
    for qid, query in queries:
        exp = expand(query, generate(GenerationRequest(build_q2k_prompt(query)), provider))
        want = search(word_index, params, exp.expanded.terms)
        assert [d for d, _ in run.rankings[qid]] == [h.doc_id for h in want]


def test_search_matches_library_ranking(work, word_index, subword_index, params, provider, queries):
    assert _search("--out", "ctqe.run", "--cost-out", "cost.json") == 0
    run = read_run(work / "ctqe.run")
    for qid, query in queries:
        exp = expand(query, generate(GenerationRequest(build_q2k_prompt(query)), provider))
        want = rank_ctqe(word_index, subword_index, params, exp)
        assert [d for d, _ in run.rankings[qid]] == [h.doc_id for h in want]
    meta = json.loads((work / "ctqe.run.config.json").read_text())
    assert meta["num_queries"] == 3
    assert json.loads((work / "cost.json").read_text())["num_queries"] == 3


def test_search_from_expansion_artifacts(work):
    main(["expand", "--queries", "queries.tsv", "--index-dir", "idx", "--mock-script", "mock_script.json",
          "--out", "exp.jsonl"])
    assert main(["search", "--expansions", "exp.jsonl", "--index-dir", "idx", "--out", "from_exp.run"]) == 0
    _search("--out", "direct.run")
    assert (work / "from_exp.run").read_bytes() == (work / "direct.run").read_bytes()


@pytest.mark.parametrize("retriever", ["dense", "sparse"])
def test_search_neural_retrievers(work, retriever):
    assert _search("--retriever", retriever, "--top-k", "5", "--out", "n.run") == 0
    run = read_run(work / "n.run")
    assert all(1 <= len(r) <= 5 for r in run.rankings.values())


def test_search_no_expansion_is_bm25(work, word_index, params, queries):
    assert _search("--no-expansion", "--out", "bm25.run") == 0
    run = read_run(work / "bm25.run")
    for qid, query in queries:
        want = search(word_index, params, query.lower().split())
        assert [d for d, _ in run.rankings[qid]] == [h.doc_id for h in want]


def test_unknown_retriever_is_usage_error(work):
    with pytest.raises(SystemExit) as info:
        _search("--retriever", "colbert", "--out", "x.run")
    assert info.value.code == 1


def test_bad_config_value_is_usage_error(work):
    assert _search("--alpha", "1.5", "--out", "x.run") == 1


def test_missing_mock_script_is_data_error(work):
    assert main(["search", "--queries", "queries.tsv", "--index-dir", "idx",
                 "--mock-script", "absent.json", "--out", "x.run"]) == 2


def test_eval_k_zero_is_usage_error(work):
    _search("--out", "r.run")
    assert main(["eval", "r.run", "qrels.txt", "--k", "0"]) == 1


def test_eval_malformed_qrels(work, capsys):
    _search("--out", "r.run")
    (work / "bad.txt").write_text("q1 0 D01\n")
    assert main(["eval", "r.run", "bad.txt"]) == 2
    assert ":1:" in capsys.readouterr().err


def test_eval_output(work, capsys):
    _search("--out", "r.run")
    capsys.readouterr()
    assert main(["eval", "r.run", "qrels.txt", "--k", "10", "--out", "m.json"]) == 0
    metrics = json.loads((work / "m.json").read_text())
    assert metrics["metric"] == "ndcg@10" and metrics["num_queries"] == 3
    assert json.loads(capsys.readouterr().out) == metrics


def _bench_config(work, name, script, max_tokens=16):
    lines = [f"name: {name}", "index_dir: idx", "generation:", f"  mock_script: {script}",
             f"  max_tokens: {max_tokens}"]
    return str(_yaml(work, f"{name}.yaml", "\n".join(lines) + "\n"))


def test_bench_reports_fixed_token_budgets(work, capsys):
    c16 = _bench_config(work, "t16", "mock_fixed_16.json")
    c32 = _bench_config(work, "t32", "mock_fixed_32.json", max_tokens=32)
    assert main(["bench", "--queries", "queries.tsv", "--qrels", "qrels.txt",
                 "--config", c16, "--config", c32, "--json-out", "bench.json"]) == 0
    rows = json.loads((work / "bench.json").read_text())
    assert [r["mean_tokens"] for r in rows] == [16.0, 32.0]
    out = capsys.readouterr().out
    assert "t16" in out and "16.0" in out and "32.0" in out


def test_bench_ndcg_matches_eval(work):
    cfg = _bench_config(work, "main", "mock_script.json")
    main(["bench", "--queries", "queries.tsv", "--qrels", "qrels.txt", "--config", cfg,
          "--runs-dir", "runs", "--json-out", "bench.json"])
    (row,) = json.loads((work / "bench.json").read_text())
    written = ndcg_at_k(read_run(work / "runs" / "main.run"), read_qrels(work / "qrels.txt"), 10)
    assert row["ndcg@10"] == pytest.approx(written.mean, abs=1e-6)


def test_bench_empty_query_file(work, capsys):
    (work / "empty.tsv").write_text("")
    assert main(["bench", "--queries", "empty.tsv"]) == 0
    assert "config" in capsys.readouterr().out


def test_queries_file_formats(tmp_path):
    (tmp_path / "q.jsonl").write_text('{"qid": 7, "text": "a b"}\n')
    assert read_queries(tmp_path / "q.jsonl") == [("7", "a b")]
    (tmp_path / "q.tsv").write_text("no tab here\n")
    with pytest.raises(ValueError, match=":1:"):
        read_queries(tmp_path / "q.tsv")


def _full_pipeline(work, fixtures_dir, monkeypatch, sub):
    root = work / sub
    root.mkdir()
    for name in ("corpus.jsonl", "queries.tsv", "qrels.txt", "mock_script.json"):
        shutil.copy(fixtures_dir / name, root / name)
    monkeypatch.chdir(root)
    assert main(["index", "corpus.jsonl", "--out-dir", "idx"]) == 0
    assert main(["expand", "--queries", "queries.tsv", "--index-dir", "idx",
                 "--mock-script", "mock_script.json", "--out", "exp.jsonl"]) == 0
    assert main(["search", "--expansions", "exp.jsonl", "--index-dir", "idx", "--out", "run.txt"]) == 0
    assert main(["eval", "run.txt", "qrels.txt", "--out", "metrics.json"]) == 0
    return root


def test_two_full_runs_are_byte_identical(work, fixtures_dir, monkeypatch):
    a = _full_pipeline(work, fixtures_dir, monkeypatch, "a")
    b = _full_pipeline(work, fixtures_dir, monkeypatch, "b")
    for name in ("idx/word.json", "idx/subword.json", "exp.jsonl", "run.txt", "run.txt.config.json", "metrics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name

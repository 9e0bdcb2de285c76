import json
from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctqe.llm import (
    Q2K_INSTRUCTION,
    CredentialError,
    EmptyGenerationError,
    GenerationRequest,
    GenerationTrace,
    HttpProvider,
    MissingLogprobsError,
    MockProvider,
    ProviderError,
    TokenStep,
    TransportError,
    build_q2k_prompt,
    count_output_tokens,
    generate,
    parse_chat_logprobs,
    prompt_hash,
)

SCRIPTED = [
    {"chosen": "diabetes", "alternates": [["insulin", -0.5], ["glucose", -1.1]]},
    {"chosen": ",", "alternates": [[",", -0.01], [";", -4.0]]},
]


def test_mock_echoes_script():
    provider = MockProvider({prompt_hash("p"): SCRIPTED})
    trace = generate(GenerationRequest("p"), provider)
    assert trace.steps == (
        TokenStep("diabetes", (("insulin", -0.5), ("glucose", -1.1))),
        TokenStep(",", ((",", -0.01), (";", -4.0))),
    )
    assert trace.full_text == "diabetes,"


def test_max_tokens_truncates():
    provider = MockProvider({"*": SCRIPTED})
    assert count_output_tokens(generate(GenerationRequest("p", max_tokens=1), provider)) == 1


def test_mock_is_bit_deterministic():
    provider = MockProvider({"*": SCRIPTED})
    req = GenerationRequest("same prompt")
    a = json.dumps(generate(req, provider).to_dict())
    b = json.dumps(generate(req, provider).to_dict())
    assert a == b


def test_mock_unknown_prompt():
    with pytest.raises(ProviderError, match="no scripted trace"):
        generate(GenerationRequest("p"), MockProvider({}))


def test_empty_generation_is_an_error():
    with pytest.raises(EmptyGenerationError):
        generate(GenerationRequest("p"), MockProvider({"*": []}))


def test_alternates_cut_to_requested_k():
    provider = MockProvider({"*": SCRIPTED})
    trace = generate(GenerationRequest("p", top_k_alternates=1), provider)
    assert all(len(s.alternates) == 1 for s in trace.steps)


@pytest.mark.parametrize(
    "kwargs", [{"max_tokens": 0}, {"top_k_alternates": 21}, {"top_k_alternates": 0}, {"temperature": -1}]
)
def test_request_validation(kwargs):
    with pytest.raises(ValueError):
        GenerationRequest("p", **kwargs)


def test_unsorted_alternates_rejected():
    with pytest.raises(ValueError, match="sorted"):
        TokenStep("a", (("a", -2.0), ("b", -1.0)))


def test_full_text_must_match_tokens():
    with pytest.raises(ValueError):
        GenerationTrace((TokenStep("abc"),), "xyz")
    # whitespace differences are tolerated
    assert GenerationTrace((TokenStep("Ġa"), TokenStep("Ġb")), "a b").full_text == "a b"


@pytest.mark.parametrize("n", [0, 16, 32])
def test_count_output_tokens(n):
    assert count_output_tokens(GenerationTrace(tuple(TokenStep("x") for _ in range(n)))) == n


@given(st.lists(st.floats(-50, 0, allow_nan=False), max_size=20))
def test_sorted_alternates_always_accepted(lps):
    step = TokenStep("x", tuple((f"t{i}", lp) for i, lp in enumerate(sorted(lps, reverse=True))))
    got = [lp for _, lp in step.alternates]
    assert all(a >= b for a, b in zip(got, got[1:]))


def test_prompt_query_only():
    prompt = build_q2k_prompt("type 2 diabetes")
    assert Q2K_INSTRUCTION == "Write keywords that are closely related to the given query."
    assert Q2K_INSTRUCTION in prompt and "type 2 diabetes" in prompt


def test_prompt_passages_precede_instruction():
    prompt = build_q2k_prompt("q", ["first passage", "second passage"])
    assert prompt.index("[1] first passage") < prompt.index("[2] second passage") < prompt.index(Q2K_INSTRUCTION)


def test_prompt_empty_passages_equals_query_only():
    assert build_q2k_prompt("q", []) == build_q2k_prompt("q") == build_q2k_prompt("q", None)


# --- HTTP provider --------------------------------------------------------


@pytest.fixture
def chat_fixture(fixtures_dir):
    return json.loads((fixtures_dir / "chat_completion_logprobs.json").read_text())


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("CTQE_TEST_KEY", "sk-test")
    return "CTQE_TEST_KEY"


def _provider(handler, api_key, **kw):
    return HttpProvider(
        endpoint="https://llm.test/v1/chat/completions",
        model="m",
        api_key_env=api_key,
        transport=httpx.MockTransport(handler),
        backoff=0.0,
        **kw,
    )


def test_http_replays_recorded_fixture(chat_fixture, api_key):
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert request.headers["Authorization"] == "Bearer sk-test"
        return httpx.Response(200, json=chat_fixture)

    trace = generate(GenerationRequest("prompt", max_tokens=16), _provider(handler, api_key))
    assert count_output_tokens(trace) == 16
    assert all(len(s.alternates) == 20 for s in trace.steps)
    body = seen[0]
    assert body["logprobs"] is True and body["top_logprobs"] == 20
    assert body["max_tokens"] == 16 and body["temperature"] == 0.0
    assert body["messages"] == [{"role": "user", "content": "prompt"}]


def test_http_without_credential(monkeypatch):
    monkeypatch.delenv("CTQE_ABSENT_KEY", raising=False)
    with pytest.raises(CredentialError, match="credential missing"):
        HttpProvider(api_key_env="CTQE_ABSENT_KEY")


def test_http_missing_logprobs(chat_fixture, api_key):
    chat_fixture["choices"][0]["logprobs"] = None
    provider = _provider(lambda r: httpx.Response(200, json=chat_fixture), api_key)
    with pytest.raises(MissingLogprobsError):
        generate(GenerationRequest("p"), provider)


def test_http_transport_failure_reports_attempts(api_key):
    def handler(request):
        raise httpx.ConnectError("boom")

    with pytest.raises(TransportError) as info:
        generate(GenerationRequest("p"), _provider(handler, api_key, max_retries=3))
    assert info.value.attempts == 3
    assert "3 attempts" in str(info.value)


def test_http_retries_server_errors(chat_fixture, api_key):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json=chat_fixture)

    trace = generate(GenerationRequest("p"), _provider(handler, api_key, max_retries=3))
    assert len(calls) == 3 and count_output_tokens(trace) == 16


def test_http_client_error_not_retried(api_key):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad request")

    with pytest.raises(ProviderError, match="HTTP 400"):
        generate(GenerationRequest("p"), _provider(handler, api_key))
    assert len(calls) == 1


def test_http_cache_makes_reruns_free(chat_fixture, api_key, tmp_path):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(200, json=chat_fixture)

    provider = _provider(handler, api_key, cache_dir=tmp_path)
    first = generate(GenerationRequest("p"), provider)
    second = generate(GenerationRequest("p"), _provider(handler, api_key, cache_dir=tmp_path))
    assert first == second and len(calls) == 1
    generate(GenerationRequest("p", max_tokens=8), provider)
    assert len(calls) == 2


def test_http_cache_concurrent_writers(chat_fixture, api_key, tmp_path):
    provider = _provider(lambda r: httpx.Response(200, json=chat_fixture), api_key, cache_dir=tmp_path)
    with ThreadPoolExecutor(8) as pool:
        traces = list(pool.map(lambda i: generate(GenerationRequest(f"p{i % 3}"), provider), range(24)))
    assert len({json.dumps(t.to_dict()) for t in traces}) == 1
    assert len(list(tmp_path.rglob("*.json"))) == 3
    assert not list(tmp_path.rglob("*.tmp"))


def test_parse_sorts_alternates_and_keeps_markers():
    payload = {
        "choices": [
            {
                "message": {"content": "Ġa"},
                "logprobs": {
                    "content": [
                        {"token": "Ġa", "logprob": -0.1, "top_logprobs": [
                            {"token": "Ġb", "logprob": -2.0}, {"token": "Ġa", "logprob": -0.1}]}
                    ]
                },
            }
        ]
    }
    trace = parse_chat_logprobs(payload)
    assert trace.steps[0].chosen == "Ġa"
    assert [t for t, _ in trace.steps[0].alternates] == ["Ġa", "Ġb"]

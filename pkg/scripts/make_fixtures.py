"""Regenerate the desk-scale fixtures under tests/fixtures/.

The corpus has 20 short documents. D13 is about metformin and shares no
word with the diabetes query or its generated keywords; only the
candidate tokens harvested at the first keyword position point at it.

Usage: python scripts/make_fixtures.py [--out tests/fixtures]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from ctqe.index import BM25Params, Document, build_index
from ctqe.llm import build_q2k_prompt, prompt_hash
from ctqe.prf import PrfConfig, prf_context

CORPUS = {
    "D01": "Type 2 diabetes treatment starts with diet changes and regular exercise to lower blood sugar.",
    "D02": "Insulin resistance is the hallmark of type 2 diabetes and drives high blood sugar.",
    "D03": "A low carbohydrate diet can improve blood sugar in adults with diabetes.",
    "D04": "Type 1 diabetes is an autoimmune condition that requires insulin injections for life.",
    "D05": "Black holes form when massive stars collapse at the end of their life cycle.",
    "D06": "Neutron stars and black holes are remnants of supernova explosions.",
    "D07": "Telescopes detect gravitational waves emitted by merging black holes.",
    "D08": "Football players recover from knee injury with physiotherapy and rest.",
    "D09": "Hamstring strains are a common football injury during sprinting.",
    "D10": "Concussion protocols keep football players off the field after head impacts.",
    "D11": "Sourdough bread needs a lively starter and a long fermentation.",
    "D12": "Roasting vegetables brings out caramelized sweetness and crisp edges.",
    "D13": "Metformin lowers hepatic glucose output and improves glycemic control in many patients.",
    "D14": "Tomato sauce simmers slowly with garlic, basil and olive oil.",
    "D15": "Jupiter has dozens of moons and a persistent storm called the great red spot.",
    "D16": "Marathon training plans increase weekly mileage gradually to avoid overuse injury.",
    "D17": "Coffee beans are roasted to develop flavour compounds and aroma.",
    "D18": "Exoplanets are found by measuring the dimming of starlight during transits.",
    "D19": "Cricket bowlers suffer stress fractures of the lower back from repetitive loading.",
    "D20": "Hospital pharmacists review prescriptions for dangerous drug interactions.",
}

QUERIES = {
    "q1": "type 2 diabetes treatment",
    "q2": "how do black holes form",
    "q3": "football injury recovery",
}

QRELS = [
    ("q1", "D01", 2),
    ("q1", "D02", 1),
    ("q1", "D03", 1),
    ("q1", "D13", 2),
    ("q1", "D04", 0),
    ("q2", "D05", 2),
    ("q2", "D06", 1),
    ("q2", "D07", 1),
    ("q3", "D08", 2),
    ("q3", "D09", 1),
    ("q3", "D10", 1),
    ("q3", "D16", 0),
]


def step(chosen: str, *alts: str) -> dict:
    """One decoding step; the chosen token is the rank-1 alternate."""
    tokens = [chosen, *alts]
    return {"chosen": chosen, "alternates": [[t, round(-0.25 * i, 2)] for i, t in enumerate(tokens)]}


FILLER = ["Ġand", "Ġthe", "Ġof", "Ġa", "Ġto", "Ġin", "Ġis", "Ġfor", "Ġwith", "Ġon",
          "Ġby", "Ġat", "Ġas", "Ġor", "Ġbe", "Ġit", "Ġan", "Ġwe", "Ġso"]


def pad(alts: list[str], k: int = 20) -> list[str]:
    out = list(alts)
    for f in FILLER:
        if len(out) >= k - 1:
            break
        if f not in out:
            out.append(f)
    return out


# q1: "insulin resistance, blood sugar, diet" with metformin/glycemic among the
# first-position alternates.
TRACES = {
    "q1": [
        step("insulin", *pad(["metformin", "glucose", "hb", "a", "Ġglycemic"])),
        step(" resistance", *pad(["Ġsensitivity", "Ġtherapy", "Ġpump"])),
        step(",", *pad([";", "\n"])),
        step(" blood", *pad(["Ġglycemic", "Ġhepatic", "Ġmetformin", "Ġx"])),
        step(" sugar", *pad(["Ġglucose", "Ġpressure"])),
        step(",", *pad([";", "\n"])),
        step(" diet", *pad(["Ġexercise", "Ġlifestyle", "Ġcarbohydrate"])),
    ],
    "q2": [
        step("stellar", *pad(["Ġsupernova", "Ġneutron", "Ġcollapse"])),
        step(" collapse", *pad(["Ġdeath", "Ġevolution"])),
        step(",", *pad([";"])),
        step(" gravity", *pad(["Ġgravitational", "Ġmass", "Ġevent"])),
        step(",", *pad([";"])),
        step(" supernova", *pad(["Ġmassive", "Ġremnant", "Ġexplosion"])),
    ],
    "q3": [
        step("knee", *pad(["Ġhamstring", "Ġconcussion", "Ġankle"])),
        step(" injury", *pad(["Ġstrain", "Ġsprain"])),
        step(",", *pad([";"])),
        step(" physiotherapy", *pad(["Ġrehabilitation", "Ġrest", "Ġtraining"])),
        step(",", *pad([";"])),
        step(" rest", *pad(["Ġrecovery", "Ġsleep", "Ġprotocols"])),
    ],
}


def fixed_length_trace(n_steps: int) -> list[dict]:
    """A keyword list exactly ``n_steps`` tokens long, for cost accounting."""
    words = ["insulin", " resistance", ",", " blood", " sugar", ",", " diet", ",",
             " exercise", ",", " glucose", ",", " metformin", ",", " obesity", ","]
    steps = []
    for i in range(n_steps):
        steps.append(step(words[i % len(words)], *pad(["Ġglycemic", "Ġhepatic"])))
    return steps


def chat_completion_fixture() -> dict:
    """A chat-completions response body with 16 tokens and top_logprobs=20."""
    words = ["insulin", " resistance", ",", " blood", " glucose", ",", " HbA", "1", "c", ",",
             " metformin", ",", " diet", ",", " exercise", ","]
    content = []
    for i, tok in enumerate(words):
        alts = [tok, *pad([f" alt{i}_{j}" for j in range(3)] + ["Ġglycemic"])]
        top = [{"token": t, "logprob": round(-0.3 * j - 0.01 * i, 4), "bytes": list(t.encode())}
               for j, t in enumerate(alts)]
        content.append({"token": tok, "logprob": top[0]["logprob"], "bytes": list(tok.encode()),
                        "top_logprobs": top})
    return {
        "id": "chatcmpl-fixture",
        "object": "chat.completion",
        "model": "gpt-4.1-mini-2025-04-14",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": "".join(words)},
            "logprobs": {"content": content, "refusal": None},
            "finish_reason": "length",
        }],
        "usage": {"prompt_tokens": 25, "completion_tokens": 16, "total_tokens": 41},
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "fixtures"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for doc_id, text in CORPUS.items():
            fh.write(json.dumps({"doc_id": doc_id, "text": text}) + "\n")
    with open(out / "queries.tsv", "w", encoding="utf-8") as fh:
        for qid, text in QUERIES.items():
            fh.write(f"{qid}\t{text}\n")
    with open(out / "qrels.txt", "w", encoding="utf-8") as fh:
        for qid, doc_id, rel in QRELS:
            fh.write(f"{qid} 0 {doc_id} {rel}\n")

    # scripted traces are keyed by both the plain and the feedback prompt
    word_index = build_index([Document(d, t) for d, t in CORPUS.items()])
    script = {}
    for qid, query in QUERIES.items():
        script[prompt_hash(build_q2k_prompt(query))] = TRACES[qid]
        passages = prf_context(word_index, BM25Params(), query, PrfConfig())
        script[prompt_hash(build_q2k_prompt(query, passages))] = TRACES[qid]
    with open(out / "mock_script.json", "w", encoding="utf-8") as fh:
        json.dump(script, fh, indent=1, sort_keys=True)

    for n in (16, 32):
        with open(out / f"mock_fixed_{n}.json", "w", encoding="utf-8") as fh:
            json.dump({"*": fixed_length_trace(n)}, fh, indent=1)

    with open(out / "chat_completion_logprobs.json", "w", encoding="utf-8") as fh:
        json.dump(chat_completion_fixture(), fh, indent=1)

    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    main()

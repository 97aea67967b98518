"""Regenerate the bundled mini-corpus and its mock script.

Run from the repository root: ``python3 tools/build_minicorpus.py``.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from peel.topics import TopicList

ROOT = Path(__file__).resolve().parents[1] / "src" / "peel" / "data"
OUT = ROOT / "minicorpus"

MARA, TOBIAS, PRIYA = "Mara Quill", "Tobias Venn", "Priya Raman"

E101 = [
    ("Host", "Welcome back. Today I am joined by Mara Quill, who builds learning systems at a robotics lab."),
    (MARA, "Thanks for having me. I think the loudest warnings about AI wiping us out rest on a picture of progress that does not match what we see."),
    ("Host", "What picture is that?"),
    (MARA, "The idea that one day a single system wakes up as a superintelligence. Progress comes piece by piece: world models, memory, reasoning, planning."),
    ("Host", "Does a smarter system not want power?"),
    (MARA, "Intelligence and the drive to dominate are separate things. We decide what objectives a system has, so its behaviour is something we design."),
    ("Host", "And safety?"),
    (MARA, "Jet engines became safe through decades of small fixes. AI safety will follow the same path, and the gradual pace gives us time to build guardrails."),
]

E102 = [
    ("Host", "My guest is Tobias Venn, who studies the limits of verification in computer science."),
    (TOBIAS, "I do not think anyone can control a system that is smarter than every one of us. That is the core of it."),
    ("Host", "Why not?"),
    (TOBIAS, "A single failure with a superintelligence may be irreversible. The attack surface is effectively infinite, and we cannot test for unknown unknowns."),
    ("Host", "Could we align it with human values?"),
    (TOBIAS, "We do not even agree on values among ourselves. Aligning one system with all of humanity looks intractable."),
    ("Host", "What follows from that?"),
    (TOBIAS, "Extinction, extreme suffering, or a loss of meaning are all on the table, and accepting that risk is wrong."),
]

E103 = [
    ("Host", "Priya Raman advises governments on technology policy. Welcome."),
    (PRIYA, "Glad to be here. My worry is simple: labs are racing to ship first."),
    ("Host", "Is competition bad for safety?"),
    (PRIYA, "Competitive pressure pushes deployment ahead of safety testing, and systems released that way will act outside the bounds we expect."),
    ("Host", "Let us change subjects. You moved back to the city last year."),
    (PRIYA, "I did, and the downtown is quieter than before. Offices are half empty."),
    ("Host", "Will that change?"),
    (PRIYA, "I expect remote work to stay, so the city centre will keep losing its buzz."),
]


def jsonl(turns) -> str:
    return "".join(json.dumps({"speaker": s, "text": t}, ensure_ascii=False) + "\n" for s, t in turns)


def prefixed(turns) -> str:
    return "".join(f"{s}: {t}\n" for s, t in turns)


def table2(name: str) -> dict:
    d = json.loads((ROOT / "table2" / name).read_text(encoding="utf-8"))
    for k in ("speaker", "episode", "schema_version"):
        d.pop(k, None)
    return d


MARA_CHAIN = table2("boomer_lecun.json")
TOBIAS_CHAIN = table2("doomer_yampolskiy.json")

PRIYA_RACE = {
    "conclusions": [{"id": "C1", "text": "Racing to deploy frontier AI makes losing human oversight of it likely, which is unacceptable."}],
    "premises": [
        {"id": "P1", "text": "Leading AI labs compete to release capable systems first.", "type": "factual", "explicitness": "explicit", "confidence": 90},
        {"id": "P2", "text": "Competitive pressure causes systems to be deployed before safety testing is complete.", "type": "causal", "explicitness": "explicit", "confidence": 80},
        {"id": "P3", "text": "Undertested systems will act outside their intended bounds.", "type": "forecast", "explicitness": "explicit", "confidence": 70},
        {"id": "P4", "text": "Capability growth outpaces the development of oversight tools.", "type": "causal", "explicitness": "implicit", "confidence": 70},
        {"id": "P5", "text": "Losing human oversight of powerful systems is unacceptable.", "type": "moral", "explicitness": "implicit", "confidence": 85},
    ],
    "relationships": [
        "R1: P1 + P2 => P6 → The race to ship leads to undertested deployments.",
        "R2: P6 + P3 + P4 → Undertested deployments that misbehave while oversight lags.",
        "R3: R2 ∧ P5 → That loss of oversight is judged unacceptable.",
        "R4: R3 => C1 → Racing to deploy makes an unacceptable loss of oversight likely.",
    ],
}

PRIYA_CITY = {
    "conclusions": [{"id": "C2", "text": "Remote work has made city centres less vibrant and will keep doing so."}],
    "premises": [
        {"id": "P1", "text": "Downtown offices are half empty.", "type": "factual", "explicitness": "explicit", "confidence": 80},
        {"id": "P2", "text": "Remote work will remain common.", "type": "forecast", "explicitness": "explicit", "confidence": 70},
    ],
    "relationships": [
        "R1: P1 + P2 → Empty offices persist as remote work stays.",
        "R2: R1 => C2 → City centres keep losing their vibrancy.",
    ],
}


def regloss(chain: dict, suffix: str) -> dict:
    out = copy.deepcopy(chain)
    out["relationships"] = [r + suffix if "→" in r or "," in r else r for r in out["relationships"]]
    return out


SUMMARIES = {
    MARA: (
        "Mara Quill argues that AGI will arrive gradually across world modelling, memory, reasoning and planning, "
        "not as a sudden event. She holds that intelligence does not imply a drive for domination and that AI "
        "behaviour can be controlled through design. Citing how jet engines became safe through incremental fixes, "
        "she expects guardrails to improve as capabilities grow, and concludes that doomer scenarios are implausible."
    ),
    TOBIAS: (
        "Tobias Venn argues that controlling AGI or superintelligence is fundamentally impossible. A single failure "
        "could be irreversible, the attack surface is effectively infinite and unknown unknowns cannot be tested for. "
        "Value alignment for all of humanity is intractable. He concludes that superintelligent AI poses overwhelming "
        "catastrophic risks, including extinction, suffering and loss of meaning, that cannot be adequately controlled."
    ),
    PRIYA: (
        "Priya Raman argues that labs racing to ship first deploy systems before safety testing is complete, and "
        "that such systems will act outside their intended bounds while oversight tools lag behind. Separately, she "
        "observes that remote work has emptied downtown offices and expects city centres to keep losing vibrancy."
    ),
}


def analysis(divs, root):
    return {"is_disagreement": True, "divergences": divs, "root": root}


def div(i, b, d, t, rationale, primary="both", deps=()):
    return {"id": f"D{i}", "boomer_ref": b, "doomer_ref": d, "type": t, "primary": primary, "depends_on": list(deps), "rationale": rationale}


PUBLISHED = analysis(
    [
        div(1, "P19", "P6", "factual", "Whether advanced AI can be controlled at all: by design versus fundamentally impossible."),
        div(2, "R17", "R9", "factual", "Designed, non-dominating systems versus uncontrollable, irreversible failure modes.", deps=["D1"]),
        div(3, "R21", "R17", "forecast", "Time and precedent for safety versus accumulated dangers of superintelligence.", deps=["D1"]),
        div(4, "R22", "R18", "causal", "Doomer assumptions contradicted versus catastrophe made unavoidable.", deps=["D2", "D3"]),
    ],
    "D1",
)

PUBLISHED_B = analysis(
    [
        div(1, "P15", "P10", "forecast", "Gradual, legible progress versus unpredictable, unexplainable systems."),
        div(2, "P19", "P6", "factual", "Control by design versus impossibility of control."),
    ],
    "D1",
)

RACE = analysis(
    [
        div(1, "R18", "R2", "causal", "Safety co-evolving with capability versus deployment racing ahead of oversight.", deps=["D2"]),
        div(2, "P22", "P4", "causal", "Safety development keeps pace with capability versus capability outpacing oversight tools."),
        div(3, "R21", "R3", "causal", "Time for safety measures versus an unacceptable loss of oversight.", deps=["D1", "D2"]),
    ],
    "D2",
)

RACE_B = analysis([RACE["divergences"][1], RACE["divergences"][2]], "D2")


def vote(topic, attitude, equivalent=False):
    v = {"topic": topic, "attitude": attitude, "new_topic": False}
    if equivalent:
        v["equivalent_votes"] = True
    return v


XRISK = "AI as Existential/Extinction Risk"
QUESTION = {
    "question": "Will safety practice keep pace with capability growth?",
    "stances": ["Safety co-evolves with capability", "Capability outpaces safety"],
    "boomer_stance": "Safety co-evolves with capability",
    "doomer_stance": "Capability outpaces safety",
    "new_question": True,
}


def script() -> list[dict]:
    r = []
    add = lambda **kw: r.append(kw)  # noqa: E731

    segs = {
        "e101": [("Why sudden-takeover stories mislead", 1, 4), ("Control by design and incremental safety", 5, 8)],
        "e102": [("The impossibility of control", 1, 4), ("Alignment and catastrophic outcomes", 5, 8)],
        "e103": [("Deployment races and safety testing", 1, 4), ("Remote work and city life", 5, 8)],
    }
    for ep, ss in segs.items():
        add(
            task_kind="segment",
            role="integrator",
            stage="segment",
            contains=f"Transcript of episode {ep} ",
            response={"segments": [{"summary": s, "start_turn": a, "end_turn": b} for s, a, b in ss]},
        )

    partial = {
        MARA: ("Mara Quill expects gradual AGI progress and rejects sudden-takeover stories.", "Mara Quill thinks control comes from design and safety improves incrementally."),
        TOBIAS: ("Tobias Venn says superintelligence cannot be controlled and failures may be irreversible.", "Tobias Venn says alignment is intractable and catastrophic risks are unacceptable."),
        PRIYA: ("Priya Raman warns that racing labs deploy before testing.", "Priya Raman notes remote work is hollowing out city centres."),
    }
    for who, (first, second) in partial.items():
        for role in ("worker_a", "worker_b"):
            add(task_kind="summarize", role=role, stage="segment-1", contains=f"Speaker: {who}\n", response=first)
            add(task_kind="summarize", role=role, stage="segment-5", contains=f"Speaker: {who}\n", response=second)
        add(task_kind="summarize", role="integrator", stage="integrate", contains=f"Speaker: {who}\n", response=SUMMARIES[who])

    add(task_kind="extract", role="integrator", stage="faithfulness", response="Both candidate extractions stay close to the summary; no unsupported premises were found.")
    add(task_kind="extract", role="integrator", stage="logic", response="The relationships are well formed and every premise feeds the conclusion.")
    # worker B's first Priya extraction is not JSON, which exercises the repair loop
    add(task_kind="extract", role="worker_b", stage="extract", attempt=0, contains=PRIYA, response="Here are the chains: {chains: [oops")
    extractions = {
        MARA: ([MARA_CHAIN], [MARA_CHAIN], [MARA_CHAIN]),
        TOBIAS: ([TOBIAS_CHAIN], [regloss(TOBIAS_CHAIN, " (restated)")], [TOBIAS_CHAIN]),
        PRIYA: ([PRIYA_RACE, PRIYA_CITY], [PRIYA_RACE], [PRIYA_RACE, PRIYA_CITY]),
    }
    for who, (a, b, final) in extractions.items():
        for role, chains in (("worker_a", a), ("worker_b", b)):
            add(task_kind="extract", role=role, contains=f"Speaker: {who}\n", response={"chains": chains})
        add(task_kind="extract", role="integrator", stage="decide", contains=who, response={"chains": final})

    classify = [
        (MARA_CHAIN["conclusions"][0]["text"], vote(XRISK, "optimistic"), vote(XRISK, "optimistic"), vote(XRISK, "optimistic")),
        (
            TOBIAS_CHAIN["conclusions"][0]["text"],
            vote(XRISK, "pessimistic"),
            vote("AI Capability Runaway & Deployment Pace", "pessimistic"),
            vote(XRISK, "pessimistic", equivalent=True),
        ),
        (PRIYA_RACE["conclusions"][0]["text"], vote(XRISK, "pessimistic"), vote(XRISK, "neutral"), vote(XRISK, "pessimistic")),
        (
            PRIYA_CITY["conclusions"][0]["text"],
            vote("Non-AI topic", "neutral"),
            vote("AI and Employment & Labor Markets", "neutral"),
            vote("Non-AI topic", "neutral"),
        ),
    ]
    for text, a, b, final in classify:
        add(task_kind="classify_topic_attitude", role="worker_a", contains=f"Conclusion: {text}\n", response=a)
        add(task_kind="classify_topic_attitude", role="worker_b", contains=f"Conclusion: {text}\n", response=b)
        add(task_kind="classify_topic_attitude", role="integrator", contains=f"Conclusion: {text}\n", response=final)

    add(task_kind="disagree", role="integrator", stage="compare", response="The analyses agree on the main divergences; the dependency ordering below resolves the differences.")
    pairs = [
        (f"e101:{MARA}:C3", f"e102:{TOBIAS}:C1", PUBLISHED, PUBLISHED_B, PUBLISHED),
        (f"e101:{MARA}:C3", f"e103:{PRIYA}:C1", RACE, RACE_B, RACE),
    ]
    for bkey, dkey, a, b, final in pairs:
        needles = [f"Boomer chain ({bkey})", f"Doomer chain ({dkey})"]
        add(task_kind="disagree", role="worker_a", stage="analyze", contains=needles, response=a)
        add(task_kind="disagree", role="worker_b", stage="analyze", contains=needles, response=b)
        add(task_kind="disagree", role="integrator", stage="synthesize", contains=needles, response=final)

    add(task_kind="aggregate_classify", contains="Boomer premise (P22)", response=QUESTION)
    return r


def main() -> None:
    tdir = OUT / "transcripts"
    tdir.mkdir(parents=True, exist_ok=True)
    (tdir / "e101.jsonl").write_text(jsonl(E101), encoding="utf-8")
    (tdir / "e102.txt").write_text(prefixed(E102), encoding="utf-8")
    (tdir / "e103.txt").write_text(prefixed(E103), encoding="utf-8")
    (OUT / "speakers.csv").write_text(
        "episode,name,profession,gender\n"
        f"e101,{MARA},Tech / Industry Researcher / Practitioner,female\n"
        f"e102,{TOBIAS},Academic,male\n"
        f"e103,{PRIYA},Public / Policy / Government / Military,female\n",
        encoding="utf-8",
    )
    tid = TopicList.seed().find(XRISK).topic_id
    (OUT / "themes.csv").write_text(f"question_id,theme\n{tid}-Q001,Technological Trajectory & Safety Co-evolution\n", encoding="utf-8")
    doc = {"description": "Scripted replies for the bundled mini-corpus", "responses": script()}
    (OUT / "mock_script.json").write_text(json.dumps(doc, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()

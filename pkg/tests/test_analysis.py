import json
import logging
import math

import numpy as np
import pytest

import oracles
from decortl.analysis import (
    ClassTransitionTable,
    ContextHistogram,
    EntropyTrace,
    build_transition_table,
    context_histograms,
    read_transition_table,
    repetition_score,
    summarize,
    trace_entropy,
    write_histogram_report,
    write_summary_report,
    write_transition_table,
)
from decortl.decoding import (
    Contrastive,
    DecodeConfig,
    Greedy,
    TopK,
    TopKTA,
    TransitionTablePolicy,
    decode,
    strategy_label,
)
from decortl.errors import EmptyInput, ParseError
from decortl.verilog import TokenClass, lex
from support import (
    build_backend,
    one_hot_logits,
    scripted_backend,
    synth_corpus,
    write_corpus,
)

TOKENS = ("a", "b", "c", "<eos>")


def lex_pairs(text):
    return [(lx.text, lx.kind.value) for lx in lex(text)]


TABLE2_CLASSES = {
    tok: "structural"
    for tok in (
        "module endmodule input output inout wire reg logic parameter assign "
        "always begin end if else case default for while posedge negedge".split()
        + list(";,.[](){}")
    )
}
TABLE2_CLASSES.update({
    tok: "high_impact"
    for tok in "+ - * / & | ^ ~ ! = == != < <= > >= ? : => && ||".split()
})


# ---------------------------------------------------------------------------
# entropy traces


def test_trace_entropy_one_hot_is_all_zero():
    backend = scripted_backend(TOKENS, [0, 1, 3])
    config = DecodeConfig(strategy=Greedy(), max_tokens=10, seed=0)
    traces = trace_entropy(backend, config, [[0], [1]])
    assert len(traces) == 2
    for t in traces:
        assert all(h == 0.0 for h in t.entropies)
        assert t.strategy == "greedy"


def test_trace_entropy_uniform_is_log_v():
    backend = build_backend(TOKENS, default=[2.5, 2.5, 2.5, 2.5], eos=3)
    config = DecodeConfig(strategy=Greedy(), max_tokens=6, seed=0)
    (trace,) = trace_entropy(backend, config, [[1]])
    assert len(trace.entropies) == 6  # greedy picks id 0 forever, no eos
    assert np.allclose(trace.entropies, math.log(4), atol=1e-12)


def test_trace_entropy_two_phase_step_change():
    peaked = one_hot_logits(4, 0, high=8.0)
    flat = np.zeros(4)
    backend = build_backend(TOKENS, steps={0: peaked, 1: peaked}, default=flat)
    config = DecodeConfig(strategy=Greedy(), base_temperature=1.0, max_tokens=4, seed=0)
    (trace,) = trace_entropy(backend, config, [[]])
    expected_low = oracles.ref_entropy(oracles.ref_softmax(list(peaked), 1.0))
    assert np.allclose(trace.entropies[:2], expected_low, atol=1e-12)
    assert np.allclose(trace.entropies[2:], math.log(4), atol=1e-12)
    assert trace.entropies[2] > trace.entropies[1] + 1.0


def test_trace_entropy_tokenizes_string_prompts():
    backend = build_backend(("ab", "c", "<eos>"), default=one_hot_logits(3, 2), eos=2)
    config = DecodeConfig(strategy=Greedy(), max_tokens=4, seed=0)
    (trace,) = trace_entropy(backend, config, ["abc"])
    assert trace.prompt_id == 0
    assert len(trace.entropies) == 1  # prompt lexes to 2 ids, eos on first step


def test_trace_entropy_skips_failing_prompts(caplog):
    backend = scripted_backend(TOKENS, [3])
    config = DecodeConfig(strategy=Greedy(), max_tokens=4, seed=0)
    with caplog.at_level(logging.WARNING):
        traces = trace_entropy(backend, config, [[0], [99], "zzz", [1]])
    assert [t.prompt_id for t in traces] == [0, 3]
    assert sum("skipped" in r.message for r in caplog.records) == 2


def test_trace_entropy_varies_seed_per_prompt():
    backend = build_backend(
        ("a", "b", "c", "d", "<eos>"),
        ctx={i: np.sin(np.arange(5) * (i + 2)) * 2 for i in range(5)},
        default=np.zeros(5),
    )
    config = DecodeConfig(strategy=TopK(3), max_tokens=12, seed=100)
    traces = trace_entropy(backend, config, [[0], [0], [0]])
    series = {t.entropies for t in traces}
    assert len(series) > 1  # same prompt, different per-prompt seeds


def test_trace_entropy_empty_prompts_rejected():
    backend = scripted_backend(TOKENS, [3])
    with pytest.raises(EmptyInput):
        trace_entropy(backend, DecodeConfig(strategy=Greedy()), [])


def test_trace_greedy_equals_contrastive_k1():
    backend = build_backend(
        ("x", "y", "z", "<eos>"),
        ctx={i: np.cos(np.arange(4) * (i + 1)) for i in range(4)},
    )
    prompts = [[0], [1], [2]]
    tg = trace_entropy(backend, DecodeConfig(strategy=Greedy(), max_tokens=15), prompts)
    tc = trace_entropy(
        backend, DecodeConfig(strategy=Contrastive(1, 0.9), max_tokens=15), prompts
    )
    assert [t.entropies for t in tg] == [t.entropies for t in tc]
    assert [t.temperatures for t in tg] == [t.temperatures for t in tc]


def test_entropy_trace_validates_lengths():
    with pytest.raises(ValueError):
        EntropyTrace(0, "greedy", (0.1, 0.2), (0.7,))


# ---------------------------------------------------------------------------
# summaries


def _trace(strategy, values, pid=0):
    return EntropyTrace(pid, strategy, tuple(values), tuple(0.7 for _ in values))


def test_summarize_single_zero_trace():
    s = summarize([_trace("greedy", [0.0, 0.0, 0.0])], "greedy")
    assert s.mean == 0.0 and s.variance == 0.0
    assert s.n_steps == 3 and s.n_traces == 1


def test_summarize_hand_computed():
    s = summarize([_trace("x", [1, 1]), _trace("x", [3, 3], pid=1)], "x")
    assert s.mean == 2.0
    assert s.variance == 1.0


def test_summarize_filters_by_strategy_and_rejects_empty():
    traces = [_trace("a", [1.0]), _trace("b", [9.0])]
    assert summarize(traces, "a").mean == 1.0
    with pytest.raises(EmptyInput):
        summarize(traces, "missing")
    with pytest.raises(EmptyInput):
        summarize([], "a")
    with pytest.raises(EmptyInput):
        summarize([_trace("a", [])], "a")


def test_summarize_permutation_invariant():
    rng = np.random.default_rng(0)
    traces = [_trace("s", rng.random(5).tolist(), pid=i) for i in range(6)]
    base = summarize(traces, "s")
    shuffled = summarize(traces[::-1], "s")
    assert math.isclose(base.mean, shuffled.mean, rel_tol=0, abs_tol=1e-12)
    assert math.isclose(base.variance, shuffled.variance, rel_tol=0, abs_tol=1e-12)
    mean, var = oracles.ref_pooled_mean_variance([t.entropies for t in traces])
    assert math.isclose(base.mean, mean, abs_tol=1e-12)
    assert math.isclose(base.variance, var, abs_tol=1e-12)


# ---------------------------------------------------------------------------
# context histograms


def test_context_histograms_hand_example(tmp_path):
    f = tmp_path / "one.v"
    f.write_text("always @(posedge clk) begin end\n")
    hists = {h.focus: h for h in context_histograms([f])}
    assert hists["begin"].counts == {")": 1}
    assert hists["("].counts == {"@": 1}
    assert hists["posedge"].counts == {"(": 1}
    assert hists[")"].counts == {"posedge": 1}  # identifier clk is transparent
    assert hists["end"].counts == {"begin": 1}
    assert "always" not in hists  # file-initial: no qualifying predecessor
    assert hists["begin"].focus_class == TokenClass.STRUCTURAL


def test_context_histograms_empty_corpus():
    assert context_histograms([]) == []


def test_context_histograms_skips_unreadable_and_foreign_files(tmp_path, caplog):
    good = tmp_path / "ok.v"
    good.write_text("module m; endmodule\n")
    foreign = tmp_path / "notes.txt"
    foreign.write_text("module m; endmodule\n")
    missing = tmp_path / "gone.v"
    with caplog.at_level(logging.WARNING):
        hists = context_histograms([good, foreign, missing])
    assert {h.focus for h in hists} == {";", "endmodule"}
    assert sum("skipping" in r.message for r in caplog.records) == 1
    assert sum("cannot read" in r.message for r in caplog.records) == 1


def test_context_histograms_match_oracle_on_synthetic_corpus(tmp_path):
    sources = synth_corpus(seed=7, count=50)
    files = write_corpus(tmp_path, sources)
    hists = {h.focus: dict(h.counts) for h in context_histograms(files)}
    expected = oracles.ref_context_histograms(sources, lex_pairs, TABLE2_CLASSES)
    assert hists == expected


def test_context_histograms_conservation(tmp_path):
    sources = synth_corpus(seed=11, count=20)
    files = write_corpus(tmp_path, sources)
    hists = context_histograms(files)
    for cls in (TokenClass.STRUCTURAL, TokenClass.HIGH_IMPACT):
        total = sum(h.total for h in hists if h.focus_class == cls)
        # independent recount: class occurrences with a syntactic predecessor
        expected = 0
        for src in sources:
            stream = [p for p in lex_pairs(src) if p[1] not in ("whitespace", "comment")]
            seen_syntactic = False
            for text, kind in stream:
                if TABLE2_CLASSES.get(text) == cls.value and seen_syntactic:
                    expected += 1
                if kind in ("keyword", "operator", "punctuation"):
                    seen_syntactic = True
        assert total == expected


# ---------------------------------------------------------------------------
# transition table


def test_transition_assign_followed_by_identifier(tmp_path):
    f = tmp_path / "a.v"
    f.write_text("".join(f"assign x{i} = y{i};\n" for i in range(6)))
    table = build_transition_table([f], min_support=5)
    assert table.entries["assign"].majority == TokenClass.NEUTRAL
    assert table.entries["assign"].support == 6
    # "=" is always followed by an identifier too
    assert table.entries["="].majority == TokenClass.NEUTRAL


def test_transition_paren_followed_by_posedge(tmp_path):
    f = tmp_path / "b.v"
    body = "".join(f"always @(posedge c{i}) q{i} = d{i};\n" for i in range(9))
    body += "assign z = (w);\n"
    f.write_text(body)
    table = build_transition_table([f], min_support=5)
    assert table.entries["("].majority == TokenClass.STRUCTURAL
    assert table.entries["("].support == 10
    assert table.entries["("].counts[TokenClass.STRUCTURAL] == 9


def test_transition_min_support_filters(tmp_path):
    f = tmp_path / "c.v"
    f.write_text("module m; endmodule\n")
    table = build_transition_table([f], min_support=5)
    assert table.entries == {}
    table1 = build_transition_table([f], min_support=1)
    assert table1.entries["module"].majority == TokenClass.NEUTRAL


def test_transition_tie_yields_neutral(tmp_path):
    f = tmp_path / "d.v"
    # "=" is followed 3 times by "(" (structural) and 3 times by "~" (high-impact)
    f.write_text("a = (b); c = (d); e = (f); g = ~h; i = ~j; k = ~l;\n")
    table = build_transition_table([f], min_support=6)
    assert table.entries["="].support == 6
    assert table.entries["="].majority == TokenClass.NEUTRAL


def test_transition_counting_is_associative(tmp_path):
    sources = synth_corpus(seed=3, count=8)
    files = write_corpus(tmp_path, sources)
    whole = build_transition_table(files, min_support=1)
    merged: dict = {}
    for f in files:
        part = build_transition_table([f], min_support=1)
        for text, entry in part.entries.items():
            bucket = merged.setdefault(text, {})
            for cls, n in entry.counts.items():
                bucket[cls] = bucket.get(cls, 0) + n
    assert {t: dict(e.counts) for t, e in whole.entries.items()} == merged


def test_transition_matches_oracle_on_synthetic_corpus(tmp_path):
    sources = synth_corpus(seed=19, count=50)
    files = write_corpus(tmp_path, sources)
    table = build_transition_table(files, min_support=5)
    counts = oracles.ref_transition_counts(sources, lex_pairs, TABLE2_CLASSES)
    expected = oracles.ref_majority_table(counts, min_support=5)
    got = {t: e.majority.value for t, e in table.entries.items()}
    assert got == expected


def test_transition_table_round_trip_and_policy(tmp_path):
    sources = synth_corpus(seed=23, count=10)
    files = write_corpus(tmp_path, sources)
    table = build_transition_table(files, min_support=3)
    path = tmp_path / "transitions.json"
    write_transition_table(path, table)
    loaded = read_transition_table(path)
    assert loaded == table
    policy = TransitionTablePolicy(table=loaded.policy_table())
    backend = build_backend(("assign", " ", "x", ";", "<eos>"))
    config = DecodeConfig(strategy=TopKTA(2), max_tokens=3, seed=0, class_policy=policy)
    decode(backend, config, [0])  # smoke: policy drives temperature without error


def test_read_transition_table_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{]")
    with pytest.raises(ParseError):
        read_transition_table(bad)
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"schema": "decortl-transitions/9", "entries": {}}))
    with pytest.raises(ParseError):
        read_transition_table(wrong)
    malformed = tmp_path / "malformed.json"
    malformed.write_text(json.dumps({
        "schema": "decortl-transitions/1", "min_support": 1,
        "entries": {"x": {"majority": "bogus-class", "support": 1, "counts": {}}},
    }))
    with pytest.raises(ParseError):
        read_transition_table(malformed)


# ---------------------------------------------------------------------------
# repetition


CLEAN_MODULE = """\
module scaler (
    input  wire [7:0] a,
    input  wire [3:0] k,
    output wire [11:0] y
);
    wire [11:0] partial;
    assign partial = a * k;
    assign y = partial + 12'd7;
endmodule
"""


def test_repetition_flags_repeated_block():
    sample = "assign a = b;\n" * 5
    score, repetitive = repetition_score(sample)
    assert score >= 5
    assert repetitive


def test_repetition_clean_module_passes():
    score, repetitive = repetition_score(CLEAN_MODULE)
    assert not repetitive
    assert score < 3


def test_repetition_empty_and_short_inputs():
    assert repetition_score("") == (0, False)
    assert repetition_score("assign a") == (0, False)


def test_repetition_abstracts_identifiers():
    sample = "assign a1 = b1;\nassign a2 = b2;\nassign a3 = b3;\n"
    score, repetitive = repetition_score(sample)
    assert score == 3
    assert repetitive


def test_repetition_distinguishes_varied_statements():
    sample = "assign a = b + c;\nassign d = e & f;\nassign g = h ^ i;\n"
    score, repetitive = repetition_score(sample)
    assert not repetitive


def test_repetition_threshold_configurable():
    sample = "assign a = b;\n" * 5
    _, repetitive = repetition_score(sample, threshold=6)
    assert not repetitive
    score, _ = repetition_score(sample)
    assert score == 5


# ---------------------------------------------------------------------------
# report writers


def test_summary_report_formats(tmp_path):
    summaries = [
        summarize([_trace("topk(k=10)", [1.0, 2.0])], "topk(k=10)"),
        summarize([_trace("greedy", [0.5])], "greedy"),
    ]
    table_path = tmp_path / "summary.txt"
    write_summary_report(table_path, summaries)
    text = table_path.read_text()
    assert "nats" in text
    assert text.index("greedy") < text.index("topk")  # sorted rows
    records_path = tmp_path / "summary.jsonl"
    write_summary_report(records_path, summaries, fmt="records")
    rows = [json.loads(line) for line in records_path.read_text().splitlines()]
    assert rows[0]["strategy"] == "greedy"
    assert rows[1]["mean_nats"] == 1.5


def test_histogram_report_orders_counts(tmp_path):
    hists = [ContextHistogram("begin", TokenClass.STRUCTURAL, {")": 3, ";": 9})]
    path = tmp_path / "hist.txt"
    write_histogram_report(path, hists)
    text = path.read_text()
    assert text.index("';'") < text.index("')'")
    records = tmp_path / "hist.jsonl"
    write_histogram_report(records, hists, fmt="records")
    row = json.loads(records.read_text())
    assert row["total"] == 12
    assert list(row["counts"]) == [";", ")"]


def test_reports_are_deterministic(tmp_path):
    sources = synth_corpus(seed=29, count=6)
    files = write_corpus(tmp_path, sources)
    h = context_histograms(files)
    t = build_transition_table(files, min_support=2)
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    write_histogram_report(a, h)
    write_histogram_report(b, h)
    assert a.read_bytes() == b.read_bytes()
    ta, tb = tmp_path / "ta.json", tmp_path / "tb.json"
    write_transition_table(ta, t)
    write_transition_table(tb, t)
    assert ta.read_bytes() == tb.read_bytes()

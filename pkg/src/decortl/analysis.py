"""Entropy traces, corpus token statistics, and repetition diagnostics.

Three views of model and corpus behavior back the decoding design:

* per-step entropy traces over full-vocabulary distributions, pooled into
  mean/variance summaries per strategy (units are nats throughout);
* corpus statistics over lexed Verilog: for each lexicon token, a
  histogram of its nearest preceding syntactic token, and a transition
  table mapping each syntactic token to the majority class of whatever
  immediately follows it;
* a repetition score flagging degenerate generations that loop the same
  token n-gram.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .decoding import DecodeConfig, decode, strategy_label
from .errors import DecortlError, EmptyInput, ParseError
from .verilog import DEFAULT_LEXICON, LexKind, Lexicon, TokenClass, classify, lex

__all__ = [
    "EntropyTrace",
    "EntropySummary",
    "ContextHistogram",
    "TransitionEntry",
    "ClassTransitionTable",
    "trace_entropy",
    "summarize",
    "context_histograms",
    "build_transition_table",
    "repetition_score",
    "write_summary_report",
    "write_histogram_report",
    "write_transition_table",
    "read_transition_table",
]

logger = logging.getLogger(__name__)

_SYNTACTIC = (LexKind.KEYWORD, LexKind.OPERATOR, LexKind.PUNCTUATION)
_TRIVIA = (LexKind.WHITESPACE, LexKind.COMMENT)

TRANSITIONS_SCHEMA = "decortl-transitions/1"


# ---------------------------------------------------------------------------
# Entropy traces


@dataclass(frozen=True)
class EntropyTrace:
    prompt_id: int
    strategy: str
    entropies: tuple[float, ...]
    temperatures: tuple[float, ...]

    def __post_init__(self):
        if len(self.entropies) != len(self.temperatures):
            raise ValueError("entropy and temperature series differ in length")


@dataclass(frozen=True)
class EntropySummary:
    strategy: str
    mean: float
    variance: float  # population variance, pooled over all steps of all traces
    n_steps: int
    n_traces: int


def trace_entropy(backend, config: DecodeConfig, prompts) -> list[EntropyTrace]:
    """Decode every prompt and collect its per-step entropy series.

    Prompts may be strings (tokenized greedily against the backend
    vocabulary) or pre-tokenized id sequences. Prompt i decodes with seed
    ``config.seed + i`` so sampled runs differ across prompts. A prompt
    that fails to tokenize or decode is logged and skipped.
    """
    if not prompts:
        raise EmptyInput("no prompts to trace")
    label = strategy_label(config.strategy)
    traces = []
    for i, prompt in enumerate(prompts):
        try:
            ids = backend.vocabulary.tokenize(prompt) if isinstance(prompt, str) else list(prompt)
            result = decode(backend, replace(config, seed=config.seed + i), ids)
        except DecortlError as exc:
            logger.warning("prompt %d skipped: %s", i, exc)
            continue
        traces.append(EntropyTrace(
            prompt_id=i,
            strategy=label,
            entropies=tuple(s.entropy for s in result.steps),
            temperatures=tuple(s.temperature for s in result.steps),
        ))
    return traces


def summarize(traces: Sequence[EntropyTrace], strategy: str) -> EntropySummary:
    """Pooled mean/variance over all steps of all traces for one strategy."""
    matching = [t for t in traces if t.strategy == strategy]
    if not matching:
        raise EmptyInput(f"no traces for strategy {strategy!r}")
    values = np.concatenate([np.asarray(t.entropies, dtype=np.float64) for t in matching])
    if values.size == 0:
        raise EmptyInput(f"traces for strategy {strategy!r} contain no steps")
    return EntropySummary(
        strategy=strategy,
        mean=float(values.mean()),
        variance=float(values.var()),
        n_steps=int(values.size),
        n_traces=len(matching),
    )


# ---------------------------------------------------------------------------
# Corpus statistics


@dataclass(frozen=True)
class ContextHistogram:
    """Counts of the nearest preceding syntactic token for one focus token."""

    focus: str
    focus_class: TokenClass
    counts: Mapping[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class TransitionEntry:
    majority: TokenClass
    support: int
    counts: Mapping[TokenClass, int]


@dataclass(frozen=True)
class ClassTransitionTable:
    entries: Mapping[str, TransitionEntry]
    min_support: int

    def policy_table(self) -> dict[str, TokenClass]:
        """The plain token -> class mapping a decode class policy consumes."""
        return {text: e.majority for text, e in self.entries.items()}


def _read_corpus(paths) -> list[tuple[str, str]]:
    """(name, text) per readable Verilog file; everything else is logged."""
    out = []
    for raw in paths:
        path = Path(raw)
        if path.suffix not in (".v", ".sv"):
            logger.warning("skipping non-Verilog file %s", path)
            continue
        try:
            out.append((str(path), path.read_text(encoding="utf-8", errors="replace")))
        except OSError as exc:
            logger.warning("cannot read %s: %s", path, exc)
    return out


def _code_stream(text: str):
    return [lx for lx in lex(text) if lx.kind not in _TRIVIA]


def context_histograms(corpus_files, lexicon: Lexicon = DEFAULT_LEXICON) -> list[ContextHistogram]:
    """Preceding-token histograms for every lexicon token in the corpus.

    The predecessor of an occurrence is the nearest earlier keyword,
    operator or punctuation lexeme; identifiers, literals and other
    unclassified lexemes are transparent. Occurrences with no qualifying
    predecessor (e.g. a file-initial ``module``) are not counted.
    """
    focus_tokens = lexicon.structural | lexicon.high_impact
    counts: dict[str, dict[str, int]] = {}
    for _, text in _read_corpus(corpus_files):
        stream = _code_stream(text)
        last_syntactic: list[str | None] = []
        prev = None
        for lx in stream:
            last_syntactic.append(prev)
            if lx.kind in _SYNTACTIC:
                prev = lx.text
        for lx, pred in zip(stream, last_syntactic):
            if lx.text not in focus_tokens or pred is None:
                continue
            bucket = counts.setdefault(lx.text, {})
            bucket[pred] = bucket.get(pred, 0) + 1
    return [
        ContextHistogram(focus=foc, focus_class=classify(foc, lexicon), counts=dict(c))
        for foc, c in sorted(counts.items())
    ]


def build_transition_table(corpus_files, min_support: int = 5,
                           lexicon: Lexicon = DEFAULT_LEXICON) -> ClassTransitionTable:
    """Majority class of the token immediately following each syntactic token.

    The follower may be any non-trivia lexeme; unlisted followers
    (identifiers, literals, ...) tally as neutral. Entries need at least
    ``min_support`` observations, and the majority must be strict --
    tied classes yield neutral.
    """
    counts: dict[str, dict[TokenClass, int]] = {}
    for _, text in _read_corpus(corpus_files):
        stream = _code_stream(text)
        for lx, nxt in zip(stream, stream[1:]):
            if lx.kind not in _SYNTACTIC:
                continue
            bucket = counts.setdefault(lx.text, {})
            cls = classify(nxt.text, lexicon)
            bucket[cls] = bucket.get(cls, 0) + 1
    entries = {}
    for text, per_class in sorted(counts.items()):
        support = sum(per_class.values())
        if support < min_support:
            continue
        best = max(per_class.values())
        winners = [c for c, n in per_class.items() if n == best]
        majority = winners[0] if len(winners) == 1 else TokenClass.NEUTRAL
        entries[text] = TransitionEntry(majority=majority, support=support,
                                        counts=dict(per_class))
    return ClassTransitionTable(entries=entries, min_support=min_support)


# ---------------------------------------------------------------------------
# Repetition diagnostic


def repetition_score(code: str, *, threshold: int = 3,
                     min_n: int = 4, max_n: int = 32) -> tuple[int, bool]:
    """Longest consecutive repetition of any token n-gram, n in [min_n, max_n].

    Identifiers are abstracted to a placeholder before matching, so
    ``assign a = b;`` and ``assign c = d;`` count as the same shape.
    Returns ``(max_repeat, max_repeat >= threshold)``; texts shorter than
    ``min_n`` code tokens score 0.
    """
    toks = [
        "<id>" if lx.kind is LexKind.IDENTIFIER else lx.text
        for lx in lex(code)
        if lx.kind not in _TRIVIA
    ]
    length = len(toks)
    if length < min_n:
        return 0, False
    best = 1
    for n in range(min_n, min(max_n, length // 2) + 1):
        # run[i] = how many positions starting at i satisfy toks[j] == toks[j+n]
        run = 0
        runs = [0] * (length - n)
        for i in range(length - n - 1, -1, -1):
            run = run + 1 if toks[i] == toks[i + n] else 0
            runs[i] = run
        for r in runs:
            repeats = r // n + 1
            if repeats > best:
                best = repeats
    return best, best >= threshold


# ---------------------------------------------------------------------------
# Report files


def write_summary_report(path, summaries: Sequence[EntropySummary],
                         fmt: str = "table") -> None:
    """Entropy summaries as an aligned text table or JSON records."""
    rows = sorted(summaries, key=lambda s: s.strategy)
    if fmt == "records":
        lines = [json.dumps({
            "strategy": s.strategy, "mean_nats": s.mean, "variance_nats": s.variance,
            "n_steps": s.n_steps, "n_traces": s.n_traces,
        }, sort_keys=True) for s in rows]
    else:
        header = f"{'strategy':<36} {'mean(nats)':>12} {'variance':>12} {'steps':>7} {'traces':>7}"
        lines = [header, "-" * len(header)]
        for s in rows:
            lines.append(
                f"{s.strategy:<36} {s.mean:>12.6f} {s.variance:>12.6f}"
                f" {s.n_steps:>7d} {s.n_traces:>7d}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_histogram_report(path, histograms: Sequence[ContextHistogram],
                           fmt: str = "table") -> None:
    """Preceding-token histograms, largest counts first within each focus."""
    hists = sorted(histograms, key=lambda h: h.focus)
    if fmt == "records":
        lines = [json.dumps({
            "focus": h.focus, "class": h.focus_class.value, "total": h.total,
            "counts": dict(sorted(h.counts.items(), key=lambda kv: (-kv[1], kv[0]))),
        }, sort_keys=False) for h in hists]
    else:
        lines = []
        for h in hists:
            lines.append(f"{h.focus!r} [{h.focus_class.value}] total={h.total}")
            for pred, n in sorted(h.counts.items(), key=lambda kv: (-kv[1], kv[0])):
                lines.append(f"    {pred!r:<16} {n}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_transition_table(path, table: ClassTransitionTable) -> None:
    payload = {
        "schema": TRANSITIONS_SCHEMA,
        "min_support": table.min_support,
        "entries": {
            text: {
                "majority": e.majority.value,
                "support": e.support,
                "counts": {cls.value: n for cls, n in sorted(
                    e.counts.items(), key=lambda kv: kv[0].value)},
            }
            for text, e in sorted(table.entries.items())
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_transition_table(path) -> ClassTransitionTable:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read transition table: {exc}", path=str(path))
    if payload.get("schema") != TRANSITIONS_SCHEMA:
        raise ParseError(
            f"unsupported transition table schema {payload.get('schema')!r}",
            path=str(path),
        )
    entries = {}
    try:
        for text, e in payload["entries"].items():
            entries[text] = TransitionEntry(
                majority=TokenClass(e["majority"]),
                support=int(e["support"]),
                counts={TokenClass(c): int(n) for c, n in e["counts"].items()},
            )
        return ClassTransitionTable(entries=entries, min_support=int(payload["min_support"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed transition table: {exc}", path=str(path))

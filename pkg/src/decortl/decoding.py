"""Decoding strategies for token-by-token generation.

Two ideas beyond the standard baselines live here:

* **Contrastive top-K re-ranking.** At each step the K most probable
  tokens are extracted, each candidate keeps its temperature-scaled
  log-probability ``L_i``, and its unit-normalized embedding ``e_i`` is
  compared against the arithmetic mean of all K unit embeddings. The
  emitted token is ``argmax(L_i - lam * dot(e_i, mean))``: candidates
  that merely restate what the whole candidate set already agrees on are
  penalized, semantically distinct ones survive. Selection is a
  deterministic argmax; the equivalent probability view
  (``p * exp(-lam * sim)``, renormalized) is exposed for diagnostics and
  is argmax-identical by monotonicity.

* **Class-adaptive temperature.** Verilog tokens are classed as
  structural (keywords, delimiters), high-impact (operators) or neutral
  (see :mod:`decortl.verilog`). Before each step the class of the next
  token is predicted from the last emitted token -- either the token's
  own class (``SelfClass``) or a corpus-derived transition table -- and
  the softmax temperature is nudged: predicted structural lowers it by
  ``delta``, predicted high-impact raises it by ``delta``, neutral keeps
  the base value. Step 0 always uses the base temperature.

Determinism contract: greedy and contrastive strategies consume no
randomness. Sampling strategies draw exactly one uniform per emitted
token, inverse-CDF style, from ``numpy.random.default_rng(seed)``; one
generator is created per :func:`decode` call. Identical backend, config
and prompt therefore reproduce identical output on any platform.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .errors import (
    ConfigError,
    InvalidDistribution,
    InvalidK,
    InvalidP,
    InvalidTemperature,
    ParseError,
    UnknownTokenId,
    ValidationError,
)
from .verilog import DEFAULT_LEXICON, Lexicon, TokenClass, classify

__all__ = [
    "Greedy",
    "TopK",
    "TopKTA",
    "Nucleus",
    "Contrastive",
    "ContrastiveTA",
    "Strategy",
    "SelfClass",
    "TransitionTablePolicy",
    "ClassPolicy",
    "DecodeConfig",
    "Candidate",
    "CandidateSet",
    "TemperatureState",
    "StepRecord",
    "DecodeResult",
    "softmax_with_temperature",
    "entropy",
    "top_k_candidates",
    "contrastive_rerank",
    "modified_probabilities",
    "predict_next_class",
    "adapt_temperature",
    "greedy_select",
    "top_k_sample",
    "nucleus_sample",
    "temperature_sample",
    "decode",
    "strategy_label",
    "without_adaptation",
    "write_trace",
    "read_trace",
    "TRACE_SCHEMA",
]


# ---------------------------------------------------------------------------
# Strategies and configuration


@dataclass(frozen=True)
class Greedy:
    """Argmax of the temperature-scaled distribution (ties to lower id)."""


@dataclass(frozen=True)
class TopK:
    """Sample from the renormalized k most probable tokens."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise InvalidK(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class TopKTA(TopK):
    """Top-k sampling with class-adaptive temperature."""


@dataclass(frozen=True)
class Nucleus:
    """Sample from the smallest probability mass prefix reaching p."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise InvalidP(f"p must satisfy 0 < p <= 1, got {self.p}")


@dataclass(frozen=True)
class Contrastive:
    """Deterministic contrastive re-ranking over the top-k tokens."""

    k: int
    lam: float

    def __post_init__(self):
        if self.k < 1:
            raise InvalidK(f"k must be >= 1, got {self.k}")
        if self.lam < 0.0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class ContrastiveTA(Contrastive):
    """Contrastive re-ranking with class-adaptive temperature."""


Strategy = Union[Greedy, TopK, TopKTA, Nucleus, Contrastive, ContrastiveTA]

_ADAPTIVE = (TopKTA, ContrastiveTA)
_CONTRASTIVE = (Contrastive, ContrastiveTA)


@dataclass(frozen=True)
class SelfClass:
    """Predict the next token's class as the last emitted token's own class."""

    lexicon: Lexicon = DEFAULT_LEXICON


@dataclass(frozen=True)
class TransitionTablePolicy:
    """Predict from a corpus-derived token -> majority-next-class table.

    Tokens absent from the table fall back to the SelfClass rule.
    """

    table: Mapping[str, TokenClass]
    lexicon: Lexicon = DEFAULT_LEXICON


ClassPolicy = Union[SelfClass, TransitionTablePolicy]


@dataclass(frozen=True)
class DecodeConfig:
    strategy: Strategy
    base_temperature: float = 0.7
    temperature_delta: float = 0.1
    max_tokens: int = 256
    seed: int = 0
    class_policy: ClassPolicy = field(default_factory=SelfClass)

    def __post_init__(self):
        if not isinstance(self.strategy, (Greedy, TopK, Nucleus, Contrastive)):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        t0, d = self.base_temperature, self.temperature_delta
        if not (math.isfinite(t0) and t0 > 0.0):
            raise InvalidTemperature(f"base temperature must be positive, got {t0}")
        if not (math.isfinite(d) and d >= 0.0):
            raise InvalidTemperature(f"temperature delta must be >= 0, got {d}")
        if t0 - d <= 0.0:
            raise InvalidTemperature(
                f"base temperature {t0} minus delta {d} must stay positive"
            )
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def adaptive(self) -> bool:
        return isinstance(self.strategy, _ADAPTIVE)


def strategy_label(strategy: Strategy) -> str:
    """Stable human-readable label used in traces and reports."""
    if isinstance(strategy, ContrastiveTA):
        return f"contrastive-ta(K={strategy.k},lam={strategy.lam:g})"
    if isinstance(strategy, Contrastive):
        return f"contrastive(K={strategy.k},lam={strategy.lam:g})"
    if isinstance(strategy, TopKTA):
        return f"topk-ta(k={strategy.k})"
    if isinstance(strategy, TopK):
        return f"topk(k={strategy.k})"
    if isinstance(strategy, Nucleus):
        return f"nucleus(p={strategy.p:g})"
    return "greedy"


def without_adaptation(strategy: Strategy) -> Strategy:
    """The fixed-temperature counterpart of a strategy (identity if already fixed)."""
    if isinstance(strategy, ContrastiveTA):
        return Contrastive(strategy.k, strategy.lam)
    if isinstance(strategy, TopKTA):
        return TopK(strategy.k)
    return strategy


# ---------------------------------------------------------------------------
# Distributions


def softmax_with_temperature(logits, temperature: float) -> np.ndarray:
    """exp(z/T) / sum(exp(z/T)), computed with max subtraction."""
    if not (math.isfinite(temperature) and temperature > 0.0):
        raise InvalidTemperature(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits must be finite")
    scaled = z / temperature
    scaled -= scaled.max()
    e = np.exp(scaled)
    return e / e.sum()


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 * ln 0 taken as 0."""
    q = np.asarray(p, dtype=np.float64)
    if q.size == 0 or np.any(q < 0.0):
        raise InvalidDistribution("probabilities must be non-negative")
    total = q.sum()
    if abs(total - 1.0) > 1e-6:
        raise InvalidDistribution(f"probabilities sum to {total!r}, not 1")
    nz = q[q > 0.0]
    return float(-(nz * np.log(nz)).sum())


def _descending_order(p: np.ndarray) -> np.ndarray:
    # stable sort on -p: ties keep ascending token id
    return np.argsort(-p, kind="stable")


# ---------------------------------------------------------------------------
# Candidates and contrastive re-ranking


@dataclass(frozen=True)
class Candidate:
    token_id: int
    log_prob: float
    embedding_unit: np.ndarray
    similarity: float | None = None
    score: float | None = None


@dataclass(eq=False)
class CandidateSet:
    """Top-K snapshot at one step.

    Field vectors are index-aligned sequences (numpy arrays or tuples),
    ordered by descending log-probability with ties to the lower token
    id. ``unit_embeddings`` rows have unit norm; ``mean_embedding`` is
    their arithmetic mean and is deliberately not re-normalized.
    ``similarities``/``scores``/``selected_index`` are filled by
    :func:`contrastive_rerank`.
    """

    token_ids: np.ndarray
    log_probs: np.ndarray
    unit_embeddings: np.ndarray | None = None
    mean_embedding: np.ndarray | None = None
    similarities: np.ndarray | None = None
    scores: np.ndarray | None = None
    selected_index: int | None = None

    def __len__(self):
        return len(self.token_ids)

    @property
    def selected_token_id(self) -> int:
        if self.selected_index is None:
            raise ValueError("candidate set has not been re-ranked")
        return int(self.token_ids[self.selected_index])

    @property
    def candidates(self) -> tuple[Candidate, ...]:
        """Materialize per-candidate records (diagnostics path, not hot)."""
        out = []
        for j in range(len(self.token_ids)):
            out.append(Candidate(
                token_id=int(self.token_ids[j]),
                log_prob=float(self.log_probs[j]),
                embedding_unit=(
                    None if self.unit_embeddings is None
                    else np.asarray(self.unit_embeddings)[j]
                ),
                similarity=(
                    None if self.similarities is None else float(self.similarities[j])
                ),
                score=None if self.scores is None else float(self.scores[j]),
            ))
        return tuple(out)


def top_k_candidates(p, k: int) -> CandidateSet:
    """The k most probable tokens, descending, ties to lower id. No scores yet."""
    q = np.asarray(p, dtype=np.float64)
    if not 1 <= k <= q.size:
        raise InvalidK(f"k must be in [1, {q.size}], got {k}")
    # copy so the set does not pin the full argsort array through a view
    ids = _descending_order(q)[:k].copy()
    with np.errstate(divide="ignore"):
        log_probs = np.log(q[ids])
    return CandidateSet(token_ids=ids, log_probs=log_probs)


def contrastive_rerank(cands: CandidateSet, lam: float, embeddings) -> CandidateSet:
    """Score candidates as log_prob - lam * similarity-to-mean and pick the best.

    Ties resolve to the earlier candidate, which by candidate ordering
    means higher log-probability first, then lower token id.
    """
    if lam < 0.0:
        raise ConfigError(f"lam must be >= 0, got {lam}")
    units = embeddings.unit_rows(cands.token_ids)
    mean = units.mean(axis=0)
    sims = units @ mean
    scores = np.asarray(cands.log_probs) - lam * sims
    return CandidateSet(
        token_ids=cands.token_ids,
        log_probs=cands.log_probs,
        unit_embeddings=units,
        mean_embedding=mean,
        similarities=sims,
        scores=scores,
        selected_index=int(np.argmax(scores)),
    )


def modified_probabilities(cands: CandidateSet, lam: float) -> np.ndarray:
    """Renormalized exp(log_prob - lam * sim) over the K candidates.

    A monotone transform of the scores, so its argmax always agrees with
    :func:`contrastive_rerank`'s selected index for the same ``lam``.
    """
    if cands.similarities is None:
        raise ConfigError("candidate set has no similarities; re-rank it first")
    w = np.exp(np.asarray(cands.log_probs) - lam * np.asarray(cands.similarities))
    return w / w.sum()


# ---------------------------------------------------------------------------
# Temperature adaptation


@dataclass(frozen=True)
class TemperatureState:
    """Temperature to use at the next step, and what drove it."""

    current: float
    last_emitted_class: TokenClass | None = None


def predict_next_class(last_token_id: int, vocabulary, policy: ClassPolicy) -> TokenClass:
    """Predicted class of the upcoming token given the one just emitted."""
    text = vocabulary.text(last_token_id)
    if isinstance(policy, TransitionTablePolicy):
        hit = policy.table.get(text.strip())
        if hit is not None:
            return hit
        return classify(text, policy.lexicon)
    return classify(text, policy.lexicon)


def adapt_temperature(predicted: TokenClass, tau0: float, delta: float) -> float:
    """Structural lowers, high-impact raises, neutral keeps the base value."""
    if predicted is TokenClass.STRUCTURAL:
        t = tau0 - delta
    elif predicted is TokenClass.HIGH_IMPACT:
        t = tau0 + delta
    else:
        t = tau0
    if t <= 0.0:
        raise InvalidTemperature(f"adapted temperature {t} is not positive")
    return t


# ---------------------------------------------------------------------------
# Baseline selection rules


def greedy_select(p) -> int:
    """Argmax; numpy returns the first maximum, so ties go to the lower id."""
    return int(np.argmax(np.asarray(p)))


def _pick(ids: np.ndarray, kept: np.ndarray, rng) -> int:
    q = kept / kept.sum()
    cum = np.cumsum(q)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return int(ids[min(idx, len(ids) - 1)])


def top_k_sample(p, k: int, rng) -> int:
    q = np.asarray(p, dtype=np.float64)
    if not 1 <= k <= q.size:
        raise InvalidK(f"k must be in [1, {q.size}], got {k}")
    ids = _descending_order(q)[:k]
    return _pick(ids, q[ids], rng)


def nucleus_sample(p, p_thresh: float, rng) -> int:
    q = np.asarray(p, dtype=np.float64)
    if not 0.0 < p_thresh <= 1.0:
        raise InvalidP(f"p must satisfy 0 < p <= 1, got {p_thresh}")
    order = _descending_order(q)
    cum = np.cumsum(q[order])
    cutoff = min(int(np.searchsorted(cum, p_thresh, side="left")), q.size - 1)
    ids = order[:cutoff + 1]
    return _pick(ids, q[ids], rng)


def temperature_sample(p, rng) -> int:
    """Plain inverse-CDF draw over the full distribution in token-id order."""
    q = np.asarray(p, dtype=np.float64)
    cum = np.cumsum(q / q.sum())
    return int(min(np.searchsorted(cum, rng.random(), side="right"), q.size - 1))


# ---------------------------------------------------------------------------
# Decode loop


@dataclass(frozen=True)
class StepRecord:
    step: int
    temperature: float
    entropy: float
    chosen_id: int
    candidate_set: CandidateSet | None = None
    wall_time_s: float = 0.0


@dataclass(frozen=True)
class DecodeResult:
    """Emitted ids (eos included when reached) plus per-step diagnostics.

    Iterates as ``(token_ids, steps)`` so callers can unpack it as the
    plain pair.
    """

    token_ids: tuple[int, ...]
    steps: tuple[StepRecord, ...]
    finish_reason: str  # "eos" | "max_tokens"

    def __iter__(self):
        return iter((self.token_ids, self.steps))


def _contrastive_choose(p: np.ndarray, k: int, lam: float, embeddings) -> CandidateSet:
    if k == 1:
        # argmax of p is the sole candidate; its similarity to the mean of
        # one unit vector is pinned to exactly 1.0 (constant score shift)
        idx = int(np.argmax(p))
        pv = float(p[idx])
        lp = math.log(pv) if pv > 0.0 else float("-inf")
        unit = embeddings.unit[idx:idx + 1]  # view, no copy
        return CandidateSet(
            token_ids=(idx,),
            log_probs=(lp,),
            unit_embeddings=unit,
            mean_embedding=unit[0],
            similarities=(1.0,),
            scores=(lp - lam,),
            selected_index=0,
        )
    # fused equivalent of contrastive_rerank(top_k_candidates(p, k), lam, ...):
    # same operations in the same order, minus the intermediate set. k and
    # lam were validated when the strategy was constructed.
    ids = _descending_order(p)[:k].copy()
    with np.errstate(divide="ignore"):
        log_probs = np.log(p[ids])
    units = embeddings.unit_rows(ids)
    mean = units.sum(axis=0) / k  # = units.mean(axis=0), sans wrapper cost
    sims = units @ mean
    scores = log_probs - lam * sims
    return CandidateSet(
        token_ids=ids,
        log_probs=log_probs,
        unit_embeddings=units,
        mean_embedding=mean,
        similarities=sims,
        scores=scores,
        selected_index=int(np.argmax(scores)),
    )


def decode(backend, config: DecodeConfig, prompt_ids) -> DecodeResult:
    """Generate until eos or ``max_tokens``, recording one StepRecord per step.

    Per step: query logits, scale by the current temperature (base at
    step 0 and for non-adaptive strategies), record full-vocabulary
    entropy, select a token by the configured strategy, then (adaptive
    strategies only) retarget the temperature from the emitted token.
    """
    vocab = backend.vocabulary
    n_vocab = len(vocab)
    strategy = config.strategy
    if isinstance(strategy, _CONTRASTIVE + (TopK,)) and strategy.k > n_vocab:
        raise InvalidK(f"k={strategy.k} exceeds vocabulary size {n_vocab}")
    context = [int(i) for i in prompt_ids]
    for tid in context:
        if not 0 <= tid < n_vocab:
            raise UnknownTokenId(f"prompt id {tid} out of range [0, {n_vocab})")

    rng = np.random.default_rng(config.seed)
    tau0 = config.base_temperature
    adaptive = config.adaptive
    policy = config.class_policy
    lexicon = getattr(policy, "lexicon", DEFAULT_LEXICON)
    state = TemperatureState(current=tau0)
    emitted: list[int] = []
    steps: list[StepRecord] = []
    finish_reason = "max_tokens"

    for step in range(config.max_tokens):
        t_start = time.perf_counter()
        logits = backend.next_logits(context)
        tau = state.current if (adaptive and step > 0) else tau0
        p = softmax_with_temperature(logits, tau)
        h = entropy(p)

        snapshot = None
        if isinstance(strategy, Greedy):
            chosen = greedy_select(p)
        elif isinstance(strategy, _CONTRASTIVE):
            snapshot = _contrastive_choose(p, strategy.k, strategy.lam, backend.embeddings)
            chosen = snapshot.selected_token_id
        elif isinstance(strategy, TopK):  # TopKTA included
            chosen = top_k_sample(p, strategy.k, rng)
        else:
            chosen = nucleus_sample(p, strategy.p, rng)

        if adaptive:
            predicted = predict_next_class(chosen, vocab, policy)
            emitted_class = (
                predicted if isinstance(policy, SelfClass)
                else classify(vocab.text(chosen), lexicon)
            )
            state = TemperatureState(
                current=adapt_temperature(predicted, tau0, config.temperature_delta),
                last_emitted_class=emitted_class,
            )

        steps.append(StepRecord(
            step=step,
            temperature=tau,
            entropy=h,
            chosen_id=chosen,
            candidate_set=snapshot,
            wall_time_s=time.perf_counter() - t_start,
        ))
        emitted.append(chosen)
        context.append(chosen)
        if chosen == backend.eos_id:
            finish_reason = "eos"
            break

    return DecodeResult(tuple(emitted), tuple(steps), finish_reason)


# ---------------------------------------------------------------------------
# Trace files

TRACE_SCHEMA = "decortl-trace/1"


def write_trace(result: DecodeResult, path, config: DecodeConfig | None = None,
                prompt_len: int | None = None, include_timing: bool = False) -> None:
    """Write one JSON record per line: a header, then one per step.

    Per-step wall times are excluded unless ``include_timing`` is set, so
    that identical runs produce byte-identical trace files.
    """
    lines = []
    header = {"type": "header", "schema": TRACE_SCHEMA, "finish_reason": result.finish_reason}
    if config is not None:
        header["strategy"] = strategy_label(config.strategy)
        header["base_temperature"] = config.base_temperature
        header["temperature_delta"] = config.temperature_delta
        header["seed"] = config.seed
    if prompt_len is not None:
        header["prompt_len"] = prompt_len
    lines.append(json.dumps(header, sort_keys=True))
    for rec in result.steps:
        row = {
            "type": "step",
            "t": rec.step,
            "temperature": rec.temperature,
            "entropy": rec.entropy,
            "chosen": rec.chosen_id,
        }
        snap = rec.candidate_set
        if snap is not None:
            log_probs = np.asarray(snap.log_probs, dtype=np.float64)
            # two entropy diagnostics over the candidate set: the
            # renormalized top-K distribution and the penalized one
            topk_p = np.exp(log_probs - log_probs.max())
            mod_p = np.exp(np.asarray(snap.scores) - np.max(snap.scores))
            row["candidates"] = {
                "ids": [int(i) for i in snap.token_ids],
                "log_probs": [float(x) for x in snap.log_probs],
                "sims": [float(x) for x in snap.similarities],
                "scores": [float(x) for x in snap.scores],
                "selected": snap.selected_index,
                "entropy_topk": entropy(topk_p / topk_p.sum()),
                "entropy_modified": entropy(mod_p / mod_p.sum()),
            }
        if include_timing:
            row["wall_time_s"] = rec.wall_time_s
        lines.append(json.dumps(row, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path) -> tuple[dict, list[StepRecord]]:
    """Read a trace file back into its header and StepRecords."""
    path = Path(path)
    header = None
    steps: list[StepRecord] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad trace line: {exc}", path=str(path), line=lineno)
        if row.get("type") == "header":
            if row.get("schema") != TRACE_SCHEMA:
                raise ParseError(
                    f"unsupported trace schema {row.get('schema')!r}",
                    path=str(path), line=lineno,
                )
            header = row
            continue
        if row.get("type") != "step":
            raise ParseError(f"unknown record type {row.get('type')!r}",
                             path=str(path), line=lineno)
        snap = None
        c = row.get("candidates")
        if c is not None:
            snap = CandidateSet(
                token_ids=np.asarray(c["ids"], dtype=np.int64),
                log_probs=np.asarray(c["log_probs"], dtype=np.float64),
                similarities=np.asarray(c["sims"], dtype=np.float64),
                scores=np.asarray(c["scores"], dtype=np.float64),
                selected_index=c["selected"],
            )
        steps.append(StepRecord(
            step=row["t"],
            temperature=row["temperature"],
            entropy=row["entropy"],
            chosen_id=row["chosen"],
            candidate_set=snap,
            wall_time_s=row.get("wall_time_s", 0.0),
        ))
    if header is None:
        raise ParseError("trace file has no header record", path=str(path))
    return header, steps

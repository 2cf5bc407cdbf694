"""Batch generation and scoring over task suites.

A suite is a list of tasks (id, prompt, optional functional-check command).
``run_suite`` decodes ``k`` samples per task, extracts the code block from
each raw completion, scores it with pluggable external checker commands, and
persists everything under ``<out_dir>/<suite>/``:

    manifest.json           run configuration, config hash, versions
    results.jsonl           one canonical record per sample (no wall times)
    timings.jsonl           per-sample wall-time sidecar
    <task_id>/<index>.v     extracted code, one file per sample

Wall times go to the sidecar so that results.jsonl and the .v files are
byte-identical across reruns with the same seed.

Checkers are command templates with ``{code_file}`` and ``{task_id}``
placeholders, run with exit code 0 meaning pass.  A checker that cannot be
spawned is a configuration error and aborts the suite; a checker that
exceeds DECORTL_CHECKER_TIMEOUT_S (default 60) is killed and the sample is
scored unknown.

Sample seeds follow ``config.seed + sample_index``, so sample j of a task is
reproducible independently of how many tasks ran before it.
"""

from __future__ import annotations

import gc
import json
import logging
import os
import platform
import re
import shlex
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from hashlib import sha256
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .analysis import repetition_score
from .backend import Backend
from .decoding import (
    DecodeConfig,
    TransitionTablePolicy,
    decode,
    strategy_label,
    without_adaptation,
)
from .errors import (
    CheckerSpawnError,
    CheckerTimeout,
    ConfigError,
    EmptyInput,
    InsufficientSamples,
    ParseError,
    ValidationError,
)

log = logging.getLogger(__name__)

_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_OPEN_FENCE_RE = re.compile(r"```[^\n]*\n")
_MODULE_RE = re.compile(r"\bmodule\b")
_ENDMODULE_RE = re.compile(r"\bendmodule\b")

RESULTS_SCHEMA = "decortl-results/1"
MANIFEST_SCHEMA = "decortl-run/1"


@dataclass(frozen=True)
class Task:
    """One prompt to sample from, with an optional functional check command."""

    id: str
    prompt: str
    func_cmd: str | None = None
    samples: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not _ID_RE.match(self.id):
            raise ValidationError(
                f"task id must match [A-Za-z0-9._-]+, got {self.id!r}"
            )
        if not isinstance(self.prompt, str):
            raise ValidationError(f"task {self.id}: prompt must be a string")
        if self.func_cmd is not None and not isinstance(self.func_cmd, str):
            raise ValidationError(f"task {self.id}: func_cmd must be a string")
        if not isinstance(self.samples, int) or self.samples < 1:
            raise ValidationError(f"task {self.id}: samples must be >= 1")


@dataclass(frozen=True)
class SampleResult:
    """Scored output of one decode call.

    syn_ok / func_ok are None when the corresponding checker was not
    configured or timed out; timeouts additionally land in `events`.
    """

    task_id: str
    sample_index: int
    code: str
    syn_ok: bool | None
    func_ok: bool | None
    repetition_score: int
    repetitive: bool
    extraction: str
    token_count: int
    latency_s: float
    events: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.sample_index < 0:
            raise ValidationError("sample_index must be >= 0")
        if self.token_count > 0 and not self.latency_s > 0.0:
            raise ValidationError("latency must be positive when tokens were emitted")


@dataclass
class SuiteReport:
    """Aggregate metrics over one suite run, recomputable from disk."""

    strategy: str
    ks: tuple[int, ...]
    syn_at: dict[int, float]
    pass_at: dict[int, float]
    repetitive_count: int
    sample_count: int
    task_count: int
    latency_mean_s: float
    latency_min_s: float
    latency_max_s: float


@dataclass(frozen=True)
class ModeRow:
    label: str
    base_temperature: float
    adaptive: bool
    syn_at_k: float
    pass_at_k: float


@dataclass(frozen=True)
class ComparisonReport:
    """Side-by-side rates for fixed temperatures vs the adaptive rule."""

    k: int
    rows: tuple[ModeRow, ...]


@dataclass(frozen=True)
class OverheadReport:
    """Seconds-per-token comparison between two decode configurations."""

    label_a: str
    label_b: str
    mean_s_per_token_a: float
    mean_s_per_token_b: float
    min_s_per_token_a: float
    min_s_per_token_b: float
    tokens_a: int
    tokens_b: int
    rounds: int

    @property
    def overhead_ratio(self) -> float:
        """mean(b) / mean(a); 1.0 means no measurable overhead."""
        return self.mean_s_per_token_b / self.mean_s_per_token_a


# ---------------------------------------------------------------------------
# Suite files


def read_suite(path) -> list[Task]:
    """Parse a task suite: JSONL, one {"id", "prompt", ...} object per line."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read suite: {exc}", str(path), 0) from exc
    tasks: list[Task] = []
    seen: set[str] = set()
    allowed = {"id", "prompt", "func_cmd", "samples"}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc.msg}", str(path), lineno) from exc
        if not isinstance(rec, dict):
            raise ParseError("task record must be an object", str(path), lineno)
        unknown = sorted(set(rec) - allowed)
        if unknown:
            raise ParseError(f"unknown keys {unknown}", str(path), lineno)
        if "id" not in rec or "prompt" not in rec:
            raise ParseError("task record needs 'id' and 'prompt'", str(path), lineno)
        try:
            task = Task(
                id=rec["id"],
                prompt=rec["prompt"],
                func_cmd=rec.get("func_cmd"),
                samples=rec.get("samples", 1),
            )
        except ValidationError as exc:
            raise ParseError(str(exc), str(path), lineno) from exc
        if task.id in seen:
            raise ParseError(f"duplicate task id {task.id!r}", str(path), lineno)
        seen.add(task.id)
        tasks.append(task)
    return tasks


def write_suite(path, tasks: Sequence[Task]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for task in tasks:
            rec = {"id": task.id, "prompt": task.prompt, "samples": task.samples}
            if task.func_cmd is not None:
                rec["func_cmd"] = task.func_cmd
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def convert_verilogeval(path) -> list[Task]:
    """Map a VerilogEval-style problem file (task_id/prompt JSONL) to Tasks.

    Only task_id and prompt are used; reference solutions and testbench
    sources are ignored because checks here are external commands.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", str(path), 0) from exc
    tasks: list[Task] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc.msg}", str(path), lineno) from exc
        if not isinstance(rec, dict) or "task_id" not in rec or "prompt" not in rec:
            raise ParseError(
                "record needs 'task_id' and 'prompt'", str(path), lineno
            )
        try:
            task = Task(id=str(rec["task_id"]), prompt=rec["prompt"])
        except ValidationError as exc:
            raise ParseError(str(exc), str(path), lineno) from exc
        if task.id in seen:
            raise ParseError(f"duplicate task id {task.id!r}", str(path), lineno)
        seen.add(task.id)
        tasks.append(task)
    return tasks


# ---------------------------------------------------------------------------
# Code extraction


def extract_code(raw: str) -> tuple[str, str]:
    """Pull the code block out of a raw completion.

    Preference order: first fenced block (an unclosed fence runs to the end
    of text), else the span from the first `module` to the last `endmodule`,
    else the whole text. Returns (code, mode) with mode in
    {"fenced", "module-span", "whole"}.
    """
    m = _FENCE_RE.search(raw)
    if m:
        return m.group(1), "fenced"
    m = _OPEN_FENCE_RE.search(raw)
    if m:
        return raw[m.end():], "fenced"
    first = _MODULE_RE.search(raw)
    if first:
        last_end = None
        for em in _ENDMODULE_RE.finditer(raw):
            last_end = em.end()
        if last_end is not None and last_end > first.start():
            return raw[first.start():last_end], "module-span"
    return raw, "whole"


# ---------------------------------------------------------------------------
# Checkers


def checker_timeout_s() -> float:
    raw = os.environ.get("DECORTL_CHECKER_TIMEOUT_S", "60")
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"DECORTL_CHECKER_TIMEOUT_S must be a number, got {raw!r}")
    if not value > 0:
        raise ConfigError(f"DECORTL_CHECKER_TIMEOUT_S must be positive, got {value}")
    return value


def run_checker(template: str, code_file, task_id: str) -> bool:
    """Run one checker command; exit code 0 means pass.

    The template is shell-split first, then {code_file}/{task_id} are
    substituted per argument, so paths with spaces stay single arguments.
    """
    try:
        parts = [
            part.format(code_file=str(code_file), task_id=task_id)
            for part in shlex.split(template)
        ]
    except (KeyError, IndexError, ValueError) as exc:
        raise CheckerSpawnError(f"bad checker template {template!r}: {exc}") from exc
    if not parts:
        raise CheckerSpawnError("checker template is empty")
    try:
        proc = subprocess.run(
            parts,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
            timeout=checker_timeout_s(),
        )
    except subprocess.TimeoutExpired as exc:
        raise CheckerTimeout(f"checker {parts[0]!r} timed out on {task_id}") from exc
    except OSError as exc:
        raise CheckerSpawnError(f"cannot spawn checker {parts[0]!r}: {exc}") from exc
    return proc.returncode == 0


def _score(template: str | None, kind: str, code_file, task_id: str,
           events: list[str]) -> bool | None:
    if template is None:
        return None
    try:
        return run_checker(template, code_file, task_id)
    except CheckerTimeout:
        events.append(f"{kind}:timeout")
        return None


# ---------------------------------------------------------------------------
# Suite runner


def config_summary(config: DecodeConfig) -> dict:
    """JSON-able view of a decode configuration, used in run manifests."""
    policy = config.class_policy
    if isinstance(policy, TransitionTablePolicy):
        policy_label = f"transition-table({len(policy.table)} entries)"
    else:
        policy_label = "self-class"
    return {
        "strategy": strategy_label(config.strategy),
        "base_temperature": config.base_temperature,
        "temperature_delta": config.temperature_delta,
        "max_tokens": config.max_tokens,
        "seed": config.seed,
        "class_policy": policy_label,
    }


def _sample_one(backend: Backend, config: DecodeConfig, task: Task,
                index: int, syn_cmd: str | None, run_dir: Path) -> SampleResult:
    prompt_ids = backend.vocabulary.tokenize(task.prompt)
    started = time.perf_counter()
    result = decode(backend, replace(config, seed=config.seed + index), prompt_ids)
    elapsed = time.perf_counter() - started
    emitted = result.token_ids
    if result.finish_reason == "eos":
        emitted = emitted[:-1]  # the terminator is control, not program text
    raw = backend.vocabulary.detokenize(emitted)
    code, mode = extract_code(raw)
    score, repetitive = repetition_score(code)

    code_file = run_dir / task.id / f"{index}.v"
    code_file.parent.mkdir(parents=True, exist_ok=True)
    code_file.write_text(code, encoding="utf-8")

    events: list[str] = []
    syn_ok = _score(syn_cmd, "syn", code_file, task.id, events)
    func_ok = _score(task.func_cmd, "func", code_file, task.id, events)
    token_count = len(result.token_ids)
    return SampleResult(
        task_id=task.id,
        sample_index=index,
        code=code,
        syn_ok=syn_ok,
        func_ok=func_ok,
        repetition_score=score,
        repetitive=repetitive,
        extraction=mode,
        token_count=token_count,
        latency_s=elapsed / token_count,
        events=tuple(events),
    )


def _canonical_record(result: SampleResult) -> dict:
    return {
        "task_id": result.task_id,
        "sample_index": result.sample_index,
        "code": result.code,
        "syn_ok": result.syn_ok,
        "func_ok": result.func_ok,
        "repetition_score": result.repetition_score,
        "repetitive": result.repetitive,
        "extraction": result.extraction,
        "token_count": result.token_count,
        "events": list(result.events),
    }


def run_suite(backend: Backend, config: DecodeConfig, tasks: Sequence[Task],
              k: int | None = None, *, out_dir, suite: str = "suite",
              syn_cmd: str | None = None, jobs: int = 1) -> list[SampleResult]:
    """Generate and score k samples per task; persist everything under out_dir.

    k defaults to the largest per-task `samples` request. Sample index j
    decodes with seed config.seed + j, so reruns reproduce every sample
    byte for byte. Tasks run on a bounded thread pool when jobs > 1;
    output order is by task position then sample index either way.
    """
    if not tasks:
        raise EmptyInput("no tasks")
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate task ids in suite")
    if k is None:
        k = max(t.samples for t in tasks)
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if jobs < 1:
        raise ValidationError(f"jobs must be >= 1, got {jobs}")
    if not _ID_RE.match(suite):
        raise ValidationError(f"suite name must match [A-Za-z0-9._-]+, got {suite!r}")
    checker_timeout_s()  # fail fast on a bad env override

    run_dir = Path(out_dir) / suite
    run_dir.mkdir(parents=True, exist_ok=True)

    def run_task(task: Task) -> list[SampleResult]:
        return [
            _sample_one(backend, config, task, j, syn_cmd, run_dir)
            for j in range(k)
        ]

    if jobs == 1:
        per_task = [run_task(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_task = list(pool.map(run_task, tasks))
    results = [r for group in per_task for r in group]

    summary = config_summary(config)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "suite": suite,
        "k": k,
        "tasks": ids,
        "syn_cmd": syn_cmd,
        "config": summary,
        "config_sha256": sha256(
            json.dumps(summary, sort_keys=True).encode()
        ).hexdigest(),
        "seed": config.seed,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "decortl": __version__,
        },
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (run_dir / "results.jsonl").open("w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(_canonical_record(result), sort_keys=True) + "\n")
    with (run_dir / "timings.jsonl").open("w", encoding="utf-8") as fh:
        for result in results:
            rec = {
                "task_id": result.task_id,
                "sample_index": result.sample_index,
                "latency_s": result.latency_s,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return results


def read_results(run_dir) -> list[SampleResult]:
    """Rebuild SampleResults from a persisted run (results + timing sidecar)."""
    run_dir = Path(run_dir)
    results_path = run_dir / "results.jsonl"
    timings_path = run_dir / "timings.jsonl"
    timings: dict[tuple[str, int], float] = {}
    for lineno, line in enumerate(
        timings_path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            timings[(rec["task_id"], rec["sample_index"])] = rec["latency_s"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad timing record: {exc}", str(timings_path), lineno)
    results: list[SampleResult] = []
    for lineno, line in enumerate(
        results_path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc.msg}", str(results_path), lineno)
        try:
            key = (rec["task_id"], rec["sample_index"])
            if key not in timings:
                raise ParseError(
                    f"no timing record for {key}", str(results_path), lineno
                )
            results.append(
                SampleResult(
                    task_id=rec["task_id"],
                    sample_index=rec["sample_index"],
                    code=rec["code"],
                    syn_ok=rec["syn_ok"],
                    func_ok=rec["func_ok"],
                    repetition_score=rec["repetition_score"],
                    repetitive=rec["repetitive"],
                    extraction=rec["extraction"],
                    token_count=rec["token_count"],
                    latency_s=timings[key],
                    events=tuple(rec["events"]),
                )
            )
        except (KeyError, TypeError, ValidationError) as exc:
            raise ParseError(
                f"bad result record: {exc}", str(results_path), lineno
            ) from exc
    return results


# ---------------------------------------------------------------------------
# Metrics


def syn_passed(result: SampleResult) -> bool:
    return result.syn_ok is True


def func_passed(result: SampleResult) -> bool:
    return result.func_ok is True


def at_k(samples: Sequence[SampleResult], k: int,
         predicate: Callable[[SampleResult], bool]) -> bool:
    """Any-of-k over one task's samples ordered by sample index."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    ordered = sorted(samples, key=lambda r: r.sample_index)
    if len(ordered) < k:
        raise InsufficientSamples(
            f"need {k} samples, have {len(ordered)}"
            + (f" for task {ordered[0].task_id}" if ordered else "")
        )
    return any(predicate(r) for r in ordered[:k])


def _by_task(results: Sequence[SampleResult]) -> dict[str, list[SampleResult]]:
    grouped: dict[str, list[SampleResult]] = {}
    for r in results:
        grouped.setdefault(r.task_id, []).append(r)
    return grouped


def metric_at_k(results: Sequence[SampleResult], k: int,
                predicate: Callable[[SampleResult], bool]) -> float:
    """Fraction of tasks whose first k samples contain a pass."""
    if not results:
        raise EmptyInput("no results")
    grouped = _by_task(results)
    wins = sum(at_k(samples, k, predicate) for samples in grouped.values())
    return wins / len(grouped)


def build_report(results: Sequence[SampleResult], ks: Sequence[int], *,
                 strategy: str) -> SuiteReport:
    """Aggregate persisted or fresh results into Syn@k / Pass@k metrics."""
    if not results:
        raise EmptyInput("no results")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise ValidationError(f"ks must be >= 1, got {ks}")
    latencies = [r.latency_s for r in results]
    return SuiteReport(
        strategy=strategy,
        ks=ks,
        syn_at={k: metric_at_k(results, k, syn_passed) for k in ks},
        pass_at={k: metric_at_k(results, k, func_passed) for k in ks},
        repetitive_count=sum(r.repetitive for r in results),
        sample_count=len(results),
        task_count=len(_by_task(results)),
        latency_mean_s=sum(latencies) / len(latencies),
        latency_min_s=min(latencies),
        latency_max_s=max(latencies),
    )


# ---------------------------------------------------------------------------
# Temperature mode comparison


def compare_temperature_modes(backend: Backend, tasks: Sequence[Task],
                              taus: Sequence[float], adaptive_config: DecodeConfig,
                              *, k: int | None = None, out_dir,
                              suite: str = "compare", syn_cmd: str | None = None,
                              jobs: int = 1) -> ComparisonReport:
    """Run the suite once per fixed temperature and once adaptively.

    Fixed modes reuse the adaptive configuration with the adaptation
    stripped and the base temperature replaced, so all modes share seeds,
    prompts, and strategy parameters; rows report Syn@k and Pass@k.
    """
    if not taus:
        raise ConfigError("need at least one fixed temperature")
    if not adaptive_config.adaptive:
        raise ConfigError("adaptive_config must use a temperature-adaptive strategy")
    if k is None:
        k = max(t.samples for t in tasks) if tasks else 1

    rows: list[ModeRow] = []
    for tau in taus:
        config = replace(
            adaptive_config,
            strategy=without_adaptation(adaptive_config.strategy),
            base_temperature=tau,
        )
        results = run_suite(
            backend, config, tasks, k,
            out_dir=out_dir, suite=f"{suite}-fixed-{tau:g}",
            syn_cmd=syn_cmd, jobs=jobs,
        )
        rows.append(ModeRow(
            label=f"fixed(t={tau:g})",
            base_temperature=tau,
            adaptive=False,
            syn_at_k=metric_at_k(results, k, syn_passed),
            pass_at_k=metric_at_k(results, k, func_passed),
        ))

    results = run_suite(
        backend, adaptive_config, tasks, k,
        out_dir=out_dir, suite=f"{suite}-adaptive", syn_cmd=syn_cmd, jobs=jobs,
    )
    rows.append(ModeRow(
        label=(
            f"adaptive(t0={adaptive_config.base_temperature:g},"
            f"delta={adaptive_config.temperature_delta:g})"
        ),
        base_temperature=adaptive_config.base_temperature,
        adaptive=True,
        syn_at_k=metric_at_k(results, k, syn_passed),
        pass_at_k=metric_at_k(results, k, func_passed),
    ))
    return ComparisonReport(k=k, rows=tuple(rows))


# ---------------------------------------------------------------------------
# Overhead measurement


def measure_overhead(backend: Backend, config_a: DecodeConfig,
                     config_b: DecodeConfig, prompts: Sequence[Sequence[int]],
                     *, rounds: int = 3, warmup: int = 1,
                     min_steps: int = 1000) -> OverheadReport:
    """Time two configurations on identical prompts, tightly interleaved.

    The configs must differ only in strategy. Within every timed round the
    two modes alternate per prompt (order swapping each round), so clock
    drift and cache warmth land on both modes equally and cancel in the
    ratio. Warmup rounds are discarded and gc is held off during timed
    rounds. Raises ValidationError if fewer than min_steps tokens were
    timed for either mode.
    """
    if replace(config_a, strategy=config_b.strategy) != config_b:
        raise ConfigError("configs must be identical apart from strategy")
    if rounds < 1 or warmup < 0:
        raise ValidationError("need rounds >= 1 and warmup >= 0")
    if not prompts:
        raise EmptyInput("no prompts")
    prompt_list = [list(p) for p in prompts]

    def run_one(config: DecodeConfig, index: int, prompt) -> tuple[float, int]:
        started = time.perf_counter()
        result = decode(backend, replace(config, seed=config.seed + index), prompt)
        return time.perf_counter() - started, len(result.token_ids)

    def run_round(flip: bool) -> tuple[tuple[float, int], tuple[float, int]]:
        time_a = time_b = 0.0
        tokens_a = tokens_b = 0
        pair = ((config_a, True), (config_b, False))
        for i, prompt in enumerate(prompt_list):
            for config, is_a in pair[::-1] if flip else pair:
                elapsed, emitted = run_one(config, i, prompt)
                if is_a:
                    time_a += elapsed
                    tokens_a += emitted
                else:
                    time_b += elapsed
                    tokens_b += emitted
        return (time_a, tokens_a), (time_b, tokens_b)

    for r in range(warmup):
        run_round(flip=bool(r % 2))

    times_a: list[tuple[float, int]] = []
    times_b: list[tuple[float, int]] = []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for r in range(rounds):
            sample_a, sample_b = run_round(flip=bool(r % 2))
            times_a.append(sample_a)
            times_b.append(sample_b)
    finally:
        if gc_was_enabled:
            gc.enable()

    def summarize_mode(samples: list[tuple[float, int]]) -> tuple[float, float, int]:
        total_time = sum(t for t, _ in samples)
        total_tokens = sum(n for _, n in samples)
        per_round = [t / n for t, n in samples]
        return total_time / total_tokens, min(per_round), total_tokens

    mean_a, min_a, tokens_a = summarize_mode(times_a)
    mean_b, min_b, tokens_b = summarize_mode(times_b)
    if tokens_a < min_steps or tokens_b < min_steps:
        raise ValidationError(
            f"timed only {min(tokens_a, tokens_b)} steps; need >= {min_steps}"
        )
    return OverheadReport(
        label_a=strategy_label(config_a.strategy),
        label_b=strategy_label(config_b.strategy),
        mean_s_per_token_a=mean_a,
        mean_s_per_token_b=mean_b,
        min_s_per_token_a=min_a,
        min_s_per_token_b=min_b,
        tokens_a=tokens_a,
        tokens_b=tokens_b,
        rounds=rounds,
    )


# ---------------------------------------------------------------------------
# Report formatting


def format_suite_report(report: SuiteReport, fmt: str = "table") -> str:
    if fmt == "records":
        lines = [
            json.dumps(
                {
                    "strategy": report.strategy,
                    "k": k,
                    "syn_at_k": report.syn_at[k],
                    "pass_at_k": report.pass_at[k],
                    "repetitive": report.repetitive_count,
                    "samples": report.sample_count,
                    "tasks": report.task_count,
                    "latency_mean_s": report.latency_mean_s,
                },
                sort_keys=True,
            )
            for k in report.ks
        ]
        return "\n".join(lines) + "\n"
    if fmt != "table":
        raise ConfigError(f"unknown format {fmt!r}")
    lines = [
        f"strategy: {report.strategy}",
        f"samples: {report.sample_count} over {report.task_count} tasks"
        f"; repetitive: {report.repetitive_count}",
        f"latency: mean {report.latency_mean_s:.3e} s/token"
        f" (min {report.latency_min_s:.3e}, max {report.latency_max_s:.3e})",
        f"{'k':>4}  {'Syn@k':>7}  {'Pass@k':>7}",
    ]
    for k in report.ks:
        lines.append(f"{k:>4}  {report.syn_at[k]:>7.3f}  {report.pass_at[k]:>7.3f}")
    return "\n".join(lines) + "\n"


def format_comparison_report(report: ComparisonReport, fmt: str = "table") -> str:
    if fmt == "records":
        lines = [
            json.dumps(
                {
                    "mode": row.label,
                    "base_temperature": row.base_temperature,
                    "adaptive": row.adaptive,
                    "k": report.k,
                    "syn_at_k": row.syn_at_k,
                    "pass_at_k": row.pass_at_k,
                },
                sort_keys=True,
            )
            for row in report.rows
        ]
        return "\n".join(lines) + "\n"
    if fmt != "table":
        raise ConfigError(f"unknown format {fmt!r}")
    width = max(len(row.label) for row in report.rows)
    lines = [f"{'mode':<{width}}  {'Syn@k':>7}  {'Pass@k':>7}   (k={report.k})"]
    for row in report.rows:
        lines.append(f"{row.label:<{width}}  {row.syn_at_k:>7.3f}  {row.pass_at_k:>7.3f}")
    return "\n".join(lines) + "\n"


def format_overhead_report(report: OverheadReport, fmt: str = "table") -> str:
    if fmt == "records":
        rec = {
            "baseline": report.label_a,
            "candidate": report.label_b,
            "mean_s_per_token_baseline": report.mean_s_per_token_a,
            "mean_s_per_token_candidate": report.mean_s_per_token_b,
            "min_s_per_token_baseline": report.min_s_per_token_a,
            "min_s_per_token_candidate": report.min_s_per_token_b,
            "tokens_baseline": report.tokens_a,
            "tokens_candidate": report.tokens_b,
            "overhead_ratio": report.overhead_ratio,
            "rounds": report.rounds,
        }
        return json.dumps(rec, sort_keys=True) + "\n"
    if fmt != "table":
        raise ConfigError(f"unknown format {fmt!r}")
    lines = [
        f"baseline : {report.label_a}: mean {report.mean_s_per_token_a:.3e}"
        f" s/token (min {report.min_s_per_token_a:.3e}, {report.tokens_a} tokens)",
        f"candidate: {report.label_b}: mean {report.mean_s_per_token_b:.3e}"
        f" s/token (min {report.min_s_per_token_b:.3e}, {report.tokens_b} tokens)",
        f"overhead : {(report.overhead_ratio - 1.0) * 100:+.2f}%"
        f" over {report.rounds} interleaved rounds",
    ]
    return "\n".join(lines) + "\n"

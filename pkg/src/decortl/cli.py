"""Command-line entry point.

Subcommands wire backends, decoding, analysis and evaluation into
reproducible runs:

* ``generate``        decode one prompt, write code + step trace
* ``analyze-entropy`` per-strategy entropy summaries over a prompt list
* ``analyze-corpus``  context histograms + class transition table
* ``evaluate``        sample suites per strategy, report Syn@k / Pass@k
* ``compare-temps``   fixed temperatures vs the adaptive schedule
* ``bench``           per-token overhead of one strategy over another
* ``import-suite``    VerilogEval-style problems -> task suite

Strategy names accept the report legend (``base``, ``ta``, ``c``,
``c+ta``) and the long spellings (``greedy``, ``topk``, ``topk-ta``,
``nucleus``, ``contrastive``, ``contrastive-ta``).

Flags can come from a JSON config file (``--config``); explicit flags
override file values. Every subcommand that writes outputs also writes a
``manifest.json`` (resolved config, its sha256, seed, versions) next to
them, and manifests carry no timestamps so identical runs are
byte-identical.

Exit codes: 0 success, 2 usage/config/input error, 3 backend failure,
4 checker failure at suite level.
"""

from __future__ import annotations

import argparse
import json
import platform
import re
import sys
from hashlib import sha256
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    build_transition_table,
    context_histograms,
    read_transition_table,
    summarize,
    trace_entropy,
    write_histogram_report,
    write_summary_report,
    write_transition_table,
)
from .backend import load_backend
from .decoding import (
    Contrastive,
    ContrastiveTA,
    DecodeConfig,
    Greedy,
    Nucleus,
    SelfClass,
    TopK,
    TopKTA,
    TransitionTablePolicy,
    decode,
    strategy_label,
    write_trace,
)
from .errors import (
    BackendUnavailable,
    CheckerSpawnError,
    CheckerTimeout,
    ConfigError,
    DecortlError,
)
from .evalharness import (
    build_report,
    compare_temperature_modes,
    config_summary,
    convert_verilogeval,
    format_comparison_report,
    format_overhead_report,
    measure_overhead,
    read_suite,
    run_suite,
    write_suite,
)

__all__ = ["main", "build_strategy"]

MANIFEST_SCHEMA = "decortl-cli/1"

_ALIASES = {"base": "topk", "ta": "topk-ta", "c": "contrastive", "c+ta": "contrastive-ta"}
_LONG_NAMES = ("greedy", "topk", "topk-ta", "nucleus", "contrastive", "contrastive-ta")


def build_strategy(name: str, *, k: int, lam: float, p: float):
    """Map a legend or long strategy name plus parameters to a strategy."""
    resolved = _ALIASES.get(name, name)
    if resolved == "greedy":
        return Greedy()
    if resolved == "topk":
        return TopK(k)
    if resolved == "topk-ta":
        return TopKTA(k)
    if resolved == "nucleus":
        return Nucleus(p)
    if resolved == "contrastive":
        return Contrastive(k, lam)
    if resolved == "contrastive-ta":
        return ContrastiveTA(k, lam)
    raise ConfigError(
        f"unknown strategy {name!r}; known: {', '.join(sorted(_ALIASES))} "
        f"or {', '.join(_LONG_NAMES)}"
    )


# ---------------------------------------------------------------------------
# flag resolution: defaults < config file < explicit flags


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        text = _read_text(config_path, "config file")
        try:
            file_cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {config_path}: bad JSON: {exc.msg}")
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {config_path} must hold an object")
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise ConfigError(f"config file {config_path}: unknown keys {unknown}")
        resolved.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _read_text(path, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}")


def _require(resolved: dict, key: str, flag: str):
    if resolved[key] is None:
        raise ConfigError(f"{flag} is required")
    return resolved[key]


def _backend(resolved: dict):
    return load_backend(_require(resolved, "backend", "--backend"))


def _decode_config(resolved: dict) -> DecodeConfig:
    policy = SelfClass()
    if resolved.get("transition_table"):
        table = read_transition_table(resolved["transition_table"])
        policy = TransitionTablePolicy(table=table.policy_table())
    return DecodeConfig(
        strategy=build_strategy(
            resolved["strategy"],
            k=resolved["cand_k"],
            lam=resolved["lambda"],
            p=resolved["p"],
        ),
        base_temperature=resolved["temp"],
        temperature_delta=resolved["delta"],
        max_tokens=resolved["max_tokens"],
        seed=resolved["seed"],
        class_policy=policy,
    )


def _write_manifest(out_dir: Path, subcommand: str, resolved: dict) -> None:
    config = {k: v for k, v in sorted(resolved.items())}
    payload = {
        "schema": MANIFEST_SCHEMA,
        "subcommand": subcommand,
        "config": config,
        "config_sha256": sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "seed": resolved.get("seed"),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "decortl": __version__,
        },
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _prompt_lines(path) -> list[str]:
    lines = [ln for ln in _read_text(path, "prompt file").splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"prompt file {path} has no prompts")
    return lines


def _suite_name(prefix: str, name: str) -> str:
    return f"{prefix}-{re.sub(r'[^A-Za-z0-9._-]', '-', name)}"


def _strategy_list(spec: str) -> list[str]:
    names = [s.strip() for s in spec.split(",") if s.strip()]
    if not names:
        raise ConfigError(f"no strategies in {spec!r}")
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate strategies in {spec!r}")
    return names


# ---------------------------------------------------------------------------
# subcommands

_GENERATE_DEFAULTS = dict(
    backend=None, prompt=None, prompt_file=None, strategy="contrastive-ta",
    cand_k=5, p=0.9, temp=0.7, delta=0.1, max_tokens=256, seed=0,
    transition_table=None, out=None, **{"lambda": 0.5},
)


def cmd_generate(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _GENERATE_DEFAULTS)
    if (resolved["prompt"] is None) == (resolved["prompt_file"] is None):
        raise ConfigError("give exactly one of --prompt / --prompt-file")
    backend = _backend(resolved)
    config = _decode_config(resolved)
    prompt = resolved["prompt"]
    if prompt is None:
        prompt = _read_text(resolved["prompt_file"], "prompt file").rstrip("\n")
    prompt_ids = backend.vocabulary.tokenize(prompt)
    result = decode(backend, config, prompt_ids)
    emitted = result.token_ids
    if result.finish_reason == "eos":
        emitted = emitted[:-1]
    text = backend.vocabulary.detokenize(emitted)
    if resolved["out"] is None:
        sys.stdout.write(text)
        if text and not text.endswith("\n"):
            sys.stdout.write("\n")
        return 0
    out_dir = Path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "output.v").write_text(text, encoding="utf-8")
    write_trace(result, out_dir / "trace.jsonl", config=config,
                prompt_len=len(prompt_ids))
    _write_manifest(out_dir, "generate", resolved)
    return 0


_ENTROPY_DEFAULTS = dict(
    backend=None, prompt_file=None, strategy="contrastive",
    cand_k=5, p=0.9, temp=0.7, delta=0.1, max_tokens=64, seed=0,
    transition_table=None, out=None, format="table", **{"lambda": 0.5},
)


def cmd_analyze_entropy(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _ENTROPY_DEFAULTS)
    backend = _backend(resolved)
    prompts = _prompt_lines(_require(resolved, "prompt_file", "--prompt-file"))
    out_dir = Path(_require(resolved, "out", "--out"))
    summaries = []
    for name in _strategy_list(resolved["strategy"]):
        config = _decode_config({**resolved, "strategy": name})
        traces = trace_entropy(backend, config, prompts)
        summaries.append(summarize(traces, strategy_label(config.strategy)))
    out_dir.mkdir(parents=True, exist_ok=True)
    report = out_dir / "entropy.txt"
    write_summary_report(report, summaries, fmt=resolved["format"])
    _write_manifest(out_dir, "analyze-entropy", resolved)
    sys.stdout.write(report.read_text(encoding="utf-8"))
    return 0


_CORPUS_DEFAULTS = dict(
    corpus=None, min_support=5, out=None, format="table",
)


def cmd_analyze_corpus(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _CORPUS_DEFAULTS)
    sources = []
    for entry in _require(resolved, "corpus", "corpus path"):
        path = Path(entry)
        if path.is_dir():
            sources.extend(sorted(path.glob("*.v")))
        else:
            sources.append(path)
    if not sources:
        raise ConfigError("no .v files found under the given corpus paths")
    out_dir = Path(_require(resolved, "out", "--out"))
    histograms = context_histograms(sources)
    table = build_transition_table(sources, min_support=resolved["min_support"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_histogram_report(out_dir / "histograms.txt", histograms,
                           fmt=resolved["format"])
    write_transition_table(out_dir / "transitions.json", table)
    manifest_view = {**resolved, "corpus": [str(s) for s in sources]}
    _write_manifest(out_dir, "analyze-corpus", manifest_view)
    print(f"{len(sources)} files, {len(histograms)} histogram rows,"
          f" {len(table.entries)} transition entries -> {out_dir}")
    return 0


_EVALUATE_DEFAULTS = dict(
    backend=None, suite=None, strategy="c+ta", k=None,
    cand_k=5, p=0.9, temp=0.7, delta=0.1, max_tokens=64, seed=0,
    transition_table=None, syn_cmd=None, jobs=1, out=None, format="table",
    **{"lambda": 0.5},
)


def _format_eval_rows(rows, ks, fmt: str) -> str:
    # rows: (strategy label, SuiteReport)
    if fmt == "records":
        lines = [
            json.dumps({
                "strategy": label, "k": k,
                "syn_at_k": report.syn_at[k], "pass_at_k": report.pass_at[k],
                "repetitive": report.repetitive_count,
                "samples": report.sample_count,
            }, sort_keys=True)
            for label, report in rows
            for k in ks
        ]
        return "\n".join(lines) + "\n"
    if fmt != "table":
        raise ConfigError(f"unknown format {fmt!r}")
    width = max(len(label) for label, _ in rows)
    header = f"{'strategy':<{width}}"
    for k in ks:
        header += f"  {'Syn@' + str(k):>8}"
    for k in ks:
        header += f"  {'Pass@' + str(k):>8}"
    lines = [header]
    for label, report in rows:
        line = f"{label:<{width}}"
        for k in ks:
            line += f"  {report.syn_at[k]:>8.3f}"
        for k in ks:
            line += f"  {report.pass_at[k]:>8.3f}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def cmd_evaluate(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _EVALUATE_DEFAULTS)
    backend = _backend(resolved)
    tasks = read_suite(_require(resolved, "suite", "--suite"))
    out_dir = Path(_require(resolved, "out", "--out"))
    ks = tuple(sorted(set(resolved["k"] or (1,))))
    if ks[0] < 1:
        raise ConfigError(f"--k values must be >= 1, got {ks}")
    rows = []
    for name in _strategy_list(resolved["strategy"]):
        config = _decode_config({**resolved, "strategy": name})
        results = run_suite(
            backend, config, tasks, max(ks),
            out_dir=out_dir, suite=_suite_name("eval", name),
            syn_cmd=resolved["syn_cmd"], jobs=resolved["jobs"],
        )
        rows.append((strategy_label(config.strategy),
                     build_report(results, ks, strategy=strategy_label(config.strategy))))
    _write_manifest(out_dir, "evaluate", resolved)
    sys.stdout.write(_format_eval_rows(rows, ks, resolved["format"]))
    return 0


_COMPARE_DEFAULTS = dict(
    backend=None, suite=None, taus=None, strategy="ta", k=None,
    cand_k=5, p=0.9, temp=0.7, delta=0.1, max_tokens=64, seed=0,
    transition_table=None, syn_cmd=None, jobs=1, out=None, format="table",
    **{"lambda": 0.5},
)


def cmd_compare_temps(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _COMPARE_DEFAULTS)
    backend = _backend(resolved)
    tasks = read_suite(_require(resolved, "suite", "--suite"))
    taus = resolved["taus"]
    if not taus:
        raise ConfigError("--taus is required (at least one fixed temperature)")
    out_dir = Path(_require(resolved, "out", "--out"))
    config = _decode_config(resolved)
    report = compare_temperature_modes(
        backend, tasks, taus, config, k=resolved["k"], out_dir=out_dir,
        syn_cmd=resolved["syn_cmd"], jobs=resolved["jobs"],
    )
    _write_manifest(out_dir, "compare-temps", resolved)
    sys.stdout.write(format_comparison_report(report, fmt=resolved["format"]))
    return 0


_BENCH_DEFAULTS = dict(
    backend=None, baseline="base", candidate="c", prompt_file=None,
    cand_k=5, p=0.9, temp=0.7, delta=0.1, max_tokens=30, seed=0,
    transition_table=None, rounds=3, warmup=1, steps=1000, out=None,
    format="table", **{"lambda": 0.5},
)


def cmd_bench(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _BENCH_DEFAULTS)
    backend = _backend(resolved)
    if resolved["prompt_file"] is not None:
        prompts = [
            backend.vocabulary.tokenize(p)
            for p in _prompt_lines(resolved["prompt_file"])
        ]
    else:
        n = len(backend.vocabulary)
        prompts = [[(j + 1) * n // 16] for j in range(12)]
    config_a = _decode_config({**resolved, "strategy": resolved["baseline"]})
    config_b = _decode_config({**resolved, "strategy": resolved["candidate"]})
    report = measure_overhead(
        backend, config_a, config_b, prompts,
        rounds=resolved["rounds"], warmup=resolved["warmup"],
        min_steps=resolved["steps"],
    )
    text = format_overhead_report(report, fmt=resolved["format"])
    if resolved["out"] is not None:
        out_dir = Path(resolved["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "overhead.txt").write_text(text, encoding="utf-8")
        _write_manifest(out_dir, "bench", resolved)
    sys.stdout.write(text)
    return 0


def cmd_import_suite(args: argparse.Namespace) -> int:
    tasks = convert_verilogeval(args.input)
    write_suite(args.out, tasks)
    print(f"imported {len(tasks)} tasks -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_decode_flags(sp: argparse.ArgumentParser, *, cand_k_help: str,
                      k_alias: bool = True) -> None:
    # --k doubles as the candidate count except where it means the at-k
    # cutoffs (evaluate, compare-temps); --cand-k works everywhere
    names = ("--k", "--cand-k") if k_alias else ("--cand-k",)
    sp.add_argument(*names, dest="cand_k", type=int, help=cand_k_help)
    sp.add_argument("--lambda", type=float,
                    help="contrastive similarity penalty weight")
    sp.add_argument("--p", type=float, help="nucleus probability mass")
    sp.add_argument("--temp", type=float, help="base temperature t0")
    sp.add_argument("--delta", type=float,
                    help="temperature adaptation step (t0 +/- delta)")
    sp.add_argument("--max-tokens", dest="max_tokens", type=int,
                    help="decode length cap per sample")
    sp.add_argument("--seed", type=int, help="base PRNG seed")
    sp.add_argument("--transition-table", dest="transition_table",
                    help="class transition table JSON; default self-class rule")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decortl",
        description="Contrastive, syntax-aware decoding for Verilog generation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    strategies_help = (
        "strategy name: base, ta, c, c+ta or greedy, topk, topk-ta, "
        "nucleus, contrastive, contrastive-ta"
    )

    sp = sub.add_parser("generate", help="decode one prompt to code + trace")
    sp.add_argument("--config", help="JSON file of flag defaults")
    sp.add_argument("--backend", help="mock model spec file")
    sp.add_argument("--prompt", help="prompt text")
    sp.add_argument("--prompt-file", dest="prompt_file", help="file with the prompt")
    sp.add_argument("--strategy", help=strategies_help)
    _add_decode_flags(sp, cand_k_help="top-K / contrastive candidate count")
    sp.add_argument("--out", help="output directory (output.v, trace.jsonl, manifest)")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("analyze-entropy",
                        help="entropy summaries per strategy over prompts")
    sp.add_argument("--config", help="JSON file of flag defaults")
    sp.add_argument("--backend", help="mock model spec file")
    sp.add_argument("--prompt-file", dest="prompt_file",
                    help="file with one prompt per line")
    sp.add_argument("--strategy", help=f"comma-separated; {strategies_help}")
    _add_decode_flags(sp, cand_k_help="top-K / contrastive candidate count")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--format", choices=("table", "records"))
    sp.set_defaults(func=cmd_analyze_entropy)

    sp = sub.add_parser("analyze-corpus",
                        help="context histograms and class transition table")
    sp.add_argument("corpus", nargs="+", help=".v files or directories of them")
    sp.add_argument("--config", help="JSON file of flag defaults")
    sp.add_argument("--min-support", dest="min_support", type=int,
                    help="occurrences needed to keep a transition entry")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--format", choices=("table", "records"))
    sp.set_defaults(func=cmd_analyze_corpus)

    sp = sub.add_parser("evaluate", help="run a task suite per strategy")
    sp.add_argument("--config", help="JSON file of flag defaults")
    sp.add_argument("--backend", help="mock model spec file")
    sp.add_argument("--suite", help="task suite JSONL")
    sp.add_argument("--strategy", help=f"comma-separated; {strategies_help}")
    sp.add_argument("--k", type=int, nargs="+",
                    help="at-k cutoffs to report, e.g. --k 1 5 10")
    _add_decode_flags(sp, cand_k_help="top-K / contrastive candidate count",
                      k_alias=False)
    sp.add_argument("--syn-cmd", dest="syn_cmd",
                    help="syntax checker template, e.g. 'iverilog {code_file}'")
    sp.add_argument("--jobs", type=int, help="parallel task workers")
    sp.add_argument("--out", help="run directory")
    sp.add_argument("--format", choices=("table", "records"))
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare-temps",
                        help="fixed temperatures vs the adaptive schedule")
    sp.add_argument("--config", help="JSON file of flag defaults")
    sp.add_argument("--backend", help="mock model spec file")
    sp.add_argument("--suite", help="task suite JSONL")
    sp.add_argument("--taus", type=float, nargs="+",
                    help="fixed temperatures to sweep")
    sp.add_argument("--strategy", help="adaptive strategy: ta or c+ta")
    sp.add_argument("--k", type=int, help="at-k cutoff for the report")
    _add_decode_flags(sp, cand_k_help="top-K / contrastive candidate count",
                      k_alias=False)
    sp.add_argument("--syn-cmd", dest="syn_cmd", help="syntax checker template")
    sp.add_argument("--jobs", type=int, help="parallel task workers")
    sp.add_argument("--out", help="run directory")
    sp.add_argument("--format", choices=("table", "records"))
    sp.set_defaults(func=cmd_compare_temps)

    sp = sub.add_parser("bench", help="per-token overhead: candidate vs baseline")
    sp.add_argument("--config", help="JSON file of flag defaults")
    sp.add_argument("--backend", help="mock model spec file")
    sp.add_argument("--baseline", help=f"baseline; {strategies_help}")
    sp.add_argument("--candidate", help=f"candidate; {strategies_help}")
    sp.add_argument("--prompt-file", dest="prompt_file",
                    help="file with one prompt per line (default: synthetic)")
    _add_decode_flags(sp, cand_k_help="top-K / contrastive candidate count")
    sp.add_argument("--rounds", type=int, help="timed rounds")
    sp.add_argument("--warmup", type=int, help="discarded warmup rounds")
    sp.add_argument("--steps", type=int, help="minimum timed tokens per mode")
    sp.add_argument("--out", help="output directory (optional)")
    sp.add_argument("--format", choices=("table", "records"))
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("import-suite",
                        help="convert VerilogEval-style problems to a suite")
    sp.add_argument("input", help="VerilogEval problem JSONL")
    sp.add_argument("--out", required=True, help="suite JSONL to write")
    sp.set_defaults(func=cmd_import_suite)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CheckerSpawnError, CheckerTimeout) as exc:
        print(f"decortl: checker failure: {exc}", file=sys.stderr)
        return 4
    except BackendUnavailable as exc:
        print(f"decortl: backend failure: {exc}", file=sys.stderr)
        return 3
    except DecortlError as exc:
        print(f"decortl: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Model backends: vocabulary, embeddings, mock models, process adapter.

Decoding needs exactly three things from a model: a vocabulary, a static
embedding table, and ``next_logits(context_ids) -> |V| float vector``.
:class:`Backend` pins that interface; :class:`MockBackend` serves it from
a deterministic spec file; :class:`PipeAdapter` serves it from a separate
process over a byte protocol.

Mock spec file format (``mockmodel v1``)
----------------------------------------

Line-oriented UTF-8 text. ``#`` at the start of a line is a comment;
blank lines are ignored. The first significant line must be the header.

::

    mockmodel v1
    dim 4                      # embedding dimensionality
    eos 3                      # end-of-sequence token id
    token "module"             # tokens in id order: this line defines id 0
    token " "                  # JSON string syntax, so any escapes work
    ...
    embed 0 1.0 0.0 0.0 0.0    # one line per id, `dim` floats
    ...
    rule ngram 1               # or `rule ngram 0|2` or `rule steps`
    logits default 0.1 0.2 ...       # |V| floats, required fallback row
    logits ctx 5 1.5 0.0 ...         # ngram rule: key = last `order` ids
    logits step 0 0.0 2.0 ...        # steps rule: key = len(context)

Lookup: an ``ngram`` rule keys on the last ``order`` context ids (order 0
uses only the default row); a ``steps`` rule keys on the current context
length. Any miss falls back to the ``default`` row.

Pipe adapter wire protocol
--------------------------

Request (child stdin): one ASCII line ``ids <id> <id> ...\\n`` (just
``ids\\n`` for an empty context). Response (child stdout): exactly
``4 * |V|`` bytes, the logit vector as little-endian float32. The parent
never sends a new request before the previous response is fully read.
"""

from __future__ import annotations

import hashlib
import json
import select
import subprocess
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BackendUnavailable,
    ParseError,
    TokenizeError,
    UnknownTokenId,
    ValidationError,
)

__all__ = [
    "Vocabulary",
    "EmbeddingTable",
    "MockModelSpec",
    "Backend",
    "MockBackend",
    "PipeAdapter",
    "load_mock_spec",
    "write_mock_spec",
    "load_backend",
    "file_sha256",
]


class Vocabulary:
    """Immutable token-id <-> text mapping with greedy tokenization."""

    def __init__(self, tokens):
        self._tokens = tuple(tokens)
        if not self._tokens:
            raise ValidationError("vocabulary is empty")
        self._ids = {}
        for i, text in enumerate(self._tokens):
            if text in self._ids:
                raise ValidationError(f"duplicate token text {text!r}")
            self._ids[text] = i
        self._max_len = max(len(t) for t in self._tokens)

    def __len__(self):
        return len(self._tokens)

    def __iter__(self):
        return iter(self._tokens)

    def text(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise UnknownTokenId(f"token id {token_id} out of range [0, {len(self._tokens)})")
        return self._tokens[token_id]

    def token_id(self, text: str) -> int:
        try:
            return self._ids[text]
        except KeyError:
            raise UnknownTokenId(f"no token with text {text!r}") from None

    def detokenize(self, token_ids) -> str:
        return "".join(self.text(i) for i in token_ids)

    def tokenize(self, text: str) -> list[int]:
        """Greedy longest-match segmentation of `text` into token ids."""
        ids = []
        pos = 0
        n = len(text)
        while pos < n:
            for end in range(min(n, pos + self._max_len), pos, -1):
                tid = self._ids.get(text[pos:end])
                if tid is not None:
                    ids.append(tid)
                    pos = end
                    break
            else:
                raise TokenizeError(
                    f"no vocabulary token matches input at offset {pos}: {text[pos:pos + 12]!r}"
                )
        return ids


class EmbeddingTable:
    """Static token embeddings with cached unit-norm rows."""

    def __init__(self, matrix):
        self._raw = np.asarray(matrix, dtype=np.float64)
        if self._raw.ndim != 2:
            raise ValidationError("embedding matrix must be 2-dimensional")
        norms = np.linalg.norm(self._raw, axis=1)
        if np.any(norms == 0.0):
            bad = int(np.flatnonzero(norms == 0.0)[0])
            raise ValidationError(f"embedding row {bad} has zero norm")
        self._norms = norms
        self._unit = None

    @property
    def raw(self) -> np.ndarray:
        return self._raw

    @property
    def dim(self) -> int:
        return self._raw.shape[1]

    def __len__(self):
        return self._raw.shape[0]

    @property
    def unit(self) -> np.ndarray:
        """The full matrix with every row scaled to unit L2 norm."""
        if self._unit is None:
            self._unit = self._raw / self._norms[:, None]
            self._unit.setflags(write=False)
        return self._unit

    def unit_rows(self, token_ids) -> np.ndarray:
        return self.unit[np.asarray(token_ids, dtype=np.intp)]


@dataclass(frozen=True, eq=False)
class MockModelSpec:
    """Parsed contents of a ``mockmodel v1`` file."""

    tokens: tuple[str, ...]
    dim: int
    eos_id: int
    embeddings: np.ndarray
    rule: str  # "ngram" | "steps"
    order: int | None
    default_logits: np.ndarray
    ctx_logits: dict = field(default_factory=dict)
    step_logits: dict = field(default_factory=dict)


class Backend(ABC):
    """What a decoder needs from a language model."""

    @property
    @abstractmethod
    def vocabulary(self) -> Vocabulary: ...

    @property
    @abstractmethod
    def embeddings(self) -> EmbeddingTable: ...

    @property
    @abstractmethod
    def eos_id(self) -> int: ...

    @abstractmethod
    def next_logits(self, context_ids) -> np.ndarray:
        """Full-vocabulary logit vector for the next position (float64 copy)."""


class MockBackend(Backend):
    """Deterministic in-process backend driven by a :class:`MockModelSpec`."""

    def __init__(self, spec: MockModelSpec):
        self._spec = spec
        self._vocabulary = Vocabulary(spec.tokens)
        self._embeddings = EmbeddingTable(spec.embeddings)
        self._n = len(spec.tokens)

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    @property
    def embeddings(self) -> EmbeddingTable:
        return self._embeddings

    @property
    def eos_id(self) -> int:
        return self._spec.eos_id

    def next_logits(self, context_ids) -> np.ndarray:
        spec = self._spec
        row = None
        if spec.rule == "ngram" and spec.order:
            if len(context_ids) >= spec.order:
                key = tuple(int(i) for i in context_ids[-spec.order:])
                for tid in key:
                    if not 0 <= tid < self._n:
                        raise UnknownTokenId(f"context id {tid} out of range [0, {self._n})")
                row = spec.ctx_logits.get(key)
        elif spec.rule == "steps":
            row = spec.step_logits.get(len(context_ids))
        if row is None:
            row = spec.default_logits
        return row.copy()


def load_mock_spec(path) -> MockModelSpec:
    """Parse and validate a ``mockmodel v1`` file."""
    path = Path(path)
    tokens: list[str] = []
    embeds: dict[int, list[float]] = {}
    dim = None
    eos_id = None
    rule = None
    order = None
    default_logits = None
    ctx_logits: dict[tuple[int, ...], np.ndarray] = {}
    step_logits: dict[int, np.ndarray] = {}
    saw_header = False

    def fail(lineno, message):
        raise ParseError(message, path=str(path), line=lineno)

    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read mock spec: {exc}", path=str(path))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not saw_header:
            if line != "mockmodel v1":
                fail(lineno, f"expected header 'mockmodel v1', got {line!r}")
            saw_header = True
            continue
        head, _, rest = line.partition(" ")
        if head == "dim":
            dim = _parse_int(rest, lineno, path, "dim")
        elif head == "eos":
            eos_id = _parse_int(rest, lineno, path, "eos")
        elif head == "token":
            try:
                text = json.loads(rest)
            except json.JSONDecodeError:
                text = None
            if not isinstance(text, str):
                fail(lineno, f"token line needs one JSON string, got {rest!r}")
            tokens.append(text)
        elif head == "embed":
            parts = rest.split()
            if not parts:
                fail(lineno, "embed line needs an id and coordinates")
            tid = _parse_int(parts[0], lineno, path, "embed id")
            if tid in embeds:
                fail(lineno, f"duplicate embed line for id {tid}")
            embeds[tid] = _parse_floats(parts[1:], lineno, path)
        elif head == "rule":
            parts = rest.split()
            if parts and parts[0] == "ngram" and len(parts) == 2:
                rule = "ngram"
                order = _parse_int(parts[1], lineno, path, "ngram order")
                if order not in (0, 1, 2):
                    fail(lineno, f"ngram order must be 0, 1 or 2, got {order}")
            elif parts == ["steps"]:
                rule = "steps"
            else:
                fail(lineno, f"unknown rule {rest!r}")
        elif head == "logits":
            parts = rest.split()
            if not parts:
                fail(lineno, "empty logits line")
            if parts[0] == "default":
                if default_logits is not None:
                    fail(lineno, "duplicate default logits row")
                default_logits = np.array(_parse_floats(parts[1:], lineno, path))
            elif parts[0] == "ctx":
                if rule != "ngram":
                    fail(lineno, "logits ctx requires a preceding `rule ngram` line")
                if order == 0:
                    fail(lineno, "ngram order 0 allows only the default row")
                if len(parts) < 1 + order + 1:
                    fail(lineno, f"logits ctx needs {order} context id(s) then |V| floats")
                key = tuple(
                    _parse_int(p, lineno, path, "context id") for p in parts[1:1 + order]
                )
                if key in ctx_logits:
                    fail(lineno, f"duplicate logits row for context {key}")
                ctx_logits[key] = np.array(_parse_floats(parts[1 + order:], lineno, path))
            elif parts[0] == "step":
                if rule != "steps":
                    fail(lineno, "logits step requires a preceding `rule steps` line")
                step = _parse_int(parts[1], lineno, path, "step index") if len(parts) > 1 else -1
                if step < 0:
                    fail(lineno, "logits step needs a non-negative step index")
                if step in step_logits:
                    fail(lineno, f"duplicate logits row for step {step}")
                step_logits[step] = np.array(_parse_floats(parts[2:], lineno, path))
            else:
                fail(lineno, f"unknown logits key {parts[0]!r}")
        else:
            fail(lineno, f"unknown directive {head!r}")

    if not saw_header:
        raise ParseError("missing 'mockmodel v1' header", path=str(path))
    if dim is None:
        raise ParseError("missing dim line", path=str(path))
    if eos_id is None:
        raise ParseError("missing eos line", path=str(path))
    if not tokens:
        raise ParseError("no token lines", path=str(path))
    if rule is None:
        raise ParseError("missing rule line", path=str(path))
    if default_logits is None:
        raise ParseError("missing `logits default` row", path=str(path))

    n = len(tokens)
    if not 0 <= eos_id < n:
        raise ValidationError(f"eos id {eos_id} out of range [0, {n})")
    missing = [i for i in range(n) if i not in embeds]
    if missing:
        raise ValidationError(f"missing embed lines for ids {missing[:5]}")
    extra = [i for i in embeds if not 0 <= i < n]
    if extra:
        raise ValidationError(f"embed lines for out-of-range ids {extra[:5]}")
    matrix = np.zeros((n, dim))
    for tid, coords in embeds.items():
        if len(coords) != dim:
            raise ValidationError(
                f"embed row for id {tid} has {len(coords)} coordinates, expected {dim}"
            )
        matrix[tid] = coords
    zero_rows = np.flatnonzero(np.linalg.norm(matrix, axis=1) == 0.0)
    if zero_rows.size:
        raise ValidationError(f"embedding row {int(zero_rows[0])} has zero norm")
    for label, row in [("default", default_logits), *[
        (f"ctx {k}", v) for k, v in ctx_logits.items()
    ], *[(f"step {k}", v) for k, v in step_logits.items()]]:
        if row.shape != (n,):
            raise ValidationError(
                f"logits row `{label}` has {row.shape[0]} entries, expected {n}"
            )
    for key in ctx_logits:
        for tid in key:
            if not 0 <= tid < n:
                raise ValidationError(f"logits ctx key references unknown id {tid}")

    return MockModelSpec(
        tokens=tuple(tokens),
        dim=dim,
        eos_id=eos_id,
        embeddings=matrix,
        rule=rule,
        order=order,
        default_logits=default_logits.astype(np.float64),
        ctx_logits={k: v.astype(np.float64) for k, v in ctx_logits.items()},
        step_logits={k: v.astype(np.float64) for k, v in step_logits.items()},
    )


def write_mock_spec(spec: MockModelSpec, path) -> None:
    """Serialize a spec back to the ``mockmodel v1`` text format."""
    lines = ["mockmodel v1", f"dim {spec.dim}", f"eos {spec.eos_id}"]
    for text in spec.tokens:
        lines.append(f"token {json.dumps(text, ensure_ascii=False)}")
    for tid, row in enumerate(np.asarray(spec.embeddings)):
        lines.append("embed " + str(tid) + " " + " ".join(repr(float(x)) for x in row))
    lines.append(f"rule ngram {spec.order}" if spec.rule == "ngram" else "rule steps")
    lines.append("logits default " + _format_row(spec.default_logits))
    for key in sorted(spec.ctx_logits):
        lines.append(
            "logits ctx " + " ".join(str(i) for i in key) + " "
            + _format_row(spec.ctx_logits[key])
        )
    for step in sorted(spec.step_logits):
        lines.append(f"logits step {step} " + _format_row(spec.step_logits[step]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_backend(path) -> MockBackend:
    """Load a mock spec file into a ready-to-use backend."""
    return MockBackend(load_mock_spec(path))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _format_row(row) -> str:
    return " ".join(repr(float(x)) for x in np.asarray(row))


def _parse_int(text, lineno, path, what):
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"bad {what}: {text.strip()!r}", path=str(path), line=lineno) from None


def _parse_floats(parts, lineno, path):
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(f"bad float: {exc}", path=str(path), line=lineno) from None


class PipeAdapter(Backend):
    """Backend served by a child process over stdin/stdout.

    The parent supplies vocabulary and embeddings (the wire carries only
    logits). Transport failures -- dead child, short read, timeout --
    surface as :class:`BackendUnavailable`.
    """

    def __init__(self, command, vocabulary: Vocabulary, embeddings: EmbeddingTable,
                 eos_id: int, timeout_s: float = 30.0):
        self._vocabulary = vocabulary
        self._embeddings = embeddings
        self._eos_id = eos_id
        self._timeout_s = timeout_s
        self._n = len(vocabulary)
        try:
            self._proc = subprocess.Popen(
                command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot start backend process: {exc}") from exc

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    @property
    def embeddings(self) -> EmbeddingTable:
        return self._embeddings

    @property
    def eos_id(self) -> int:
        return self._eos_id

    def next_logits(self, context_ids) -> np.ndarray:
        request = ("ids " + " ".join(str(int(i)) for i in context_ids)).rstrip() + "\n"
        proc = self._proc
        if proc.poll() is not None:
            raise BackendUnavailable(f"backend process exited with code {proc.returncode}")
        try:
            proc.stdin.write(request.encode("ascii"))
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendUnavailable(f"backend pipe write failed: {exc}") from exc
        payload = self._read_exact(4 * self._n)
        return np.frombuffer(payload, dtype="<f4").astype(np.float64)

    def _read_exact(self, nbytes: int) -> bytes:
        chunks = []
        remaining = nbytes
        fd = self._proc.stdout
        while remaining > 0:
            ready, _, _ = select.select([fd], [], [], self._timeout_s)
            if not ready:
                raise BackendUnavailable(
                    f"backend response timed out after {self._timeout_s}s"
                )
            chunk = fd.read(remaining)
            if not chunk:
                raise BackendUnavailable(
                    f"backend closed pipe mid-response ({nbytes - remaining}/{nbytes} bytes)"
                )
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self):
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

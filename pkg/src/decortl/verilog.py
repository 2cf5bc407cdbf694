"""Verilog lexing and token classification.

The lexer is total: any UTF-8 text, including broken model output, lexes
into a sequence of lexemes whose concatenated texts reproduce the input
exactly. Tokens are then classified into three roles that drive decoding:

* ``STRUCTURAL``   -- keywords and delimiters that define code shape,
* ``HIGH_IMPACT``  -- operators that carry design semantics,
* ``NEUTRAL``      -- everything else (identifiers, literals, comments).

The built-in lexicons can be replaced from a plain-text config file with
``[structural]`` / ``[high_impact]`` section headers and one token per
line (``#`` starts a comment line, so ``#`` itself cannot be a lexicon
entry; the default lexicons do not need it).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import LexiconError

__all__ = [
    "LexKind",
    "Lexeme",
    "TokenClass",
    "Lexicon",
    "DEFAULT_LEXICON",
    "STRUCTURAL_TOKENS",
    "HIGH_IMPACT_TOKENS",
    "lex",
    "classify",
    "classify_stream",
    "load_lexicon",
]


class LexKind(Enum):
    KEYWORD = "keyword"
    OPERATOR = "operator"
    PUNCTUATION = "punctuation"
    IDENTIFIER = "identifier"
    LITERAL = "literal"
    COMMENT = "comment"
    WHITESPACE = "whitespace"
    OTHER = "other"


@dataclass(frozen=True)
class Lexeme:
    """One maximal-munch slice of source text.

    ``byte_span`` is the (start, end) offset pair into the UTF-8 encoding
    of the source; spans of consecutive lexemes tile the input.
    """

    text: str
    kind: LexKind
    byte_span: tuple[int, int]


class TokenClass(Enum):
    STRUCTURAL = "structural"
    HIGH_IMPACT = "high_impact"
    NEUTRAL = "neutral"


# Structural tokens: module shape, control flow, delimiters.
STRUCTURAL_TOKENS: frozenset[str] = frozenset({
    "module", "endmodule", "input", "output", "inout", "wire", "reg",
    "logic", "parameter", "assign", "always", "begin", "end", "if",
    "else", "case", "default", "for", "while",
    ";", ",", ".", "[", "]", "(", ")", "{", "}",
    "posedge", "negedge",
})

# High-impact tokens: arithmetic/bitwise/logical/comparison operators and
# conditional glue. ``<=`` doubles as the nonblocking assignment but is
# classified high-impact unconditionally.
HIGH_IMPACT_TOKENS: frozenset[str] = frozenset({
    "+", "-", "*", "/", "&", "|", "^", "~", "!",
    "=", "==", "!=", "<", "<=", ">", ">=",
    "?", ":", "=>", "&&", "||",
})


@dataclass(frozen=True)
class Lexicon:
    """A pair of disjoint token sets driving :func:`classify`."""

    structural: frozenset[str]
    high_impact: frozenset[str]

    def __post_init__(self):
        overlap = self.structural & self.high_impact
        if overlap:
            raise LexiconError(
                f"tokens listed in both sections: {sorted(overlap)}"
            )


DEFAULT_LEXICON = Lexicon(STRUCTURAL_TOKENS, HIGH_IMPACT_TOKENS)


# Verilog-2001 reserved words (plus `logic`, which the classifier treats
# as a first-class structural keyword).
VERILOG_KEYWORDS: frozenset[str] = frozenset("""
always and assign automatic begin buf bufif0 bufif1 case casex casez cell
cmos config deassign default defparam design disable edge else end endcase
endconfig endfunction endgenerate endmodule endprimitive endspecify
endtable endtask event for force forever fork function generate genvar
highz0 highz1 if ifnone incdir include initial inout input instance
integer join large liblist library localparam logic macromodule medium
module nand negedge nmos nor noshowcancelled not notif0 notif1 or output
parameter pmos posedge primitive pull0 pull1 pulldown pullup
pulsestyle_ondetect pulsestyle_onevent rcmos real realtime reg release
repeat rnmos rpmos rtran rtranif0 rtranif1 scalared showcancelled signed
small specify specparam strong0 strong1 supply0 supply1 table task time
tran tranif0 tranif1 tri tri0 tri1 triand trior trireg unsigned use
vectored wait wand weak0 weak1 while wire wor xnor xor
""".split())

# Operators tried longest-first for maximal munch.
_OPERATORS_3 = ("===", "!==", "<<<", ">>>")
_OPERATORS_2 = (
    "==", "!=", "<=", ">=", "&&", "||", "<<", ">>",
    "~&", "~|", "~^", "^~", "**", "->", "=>", "+:", "-:",
)
_OPERATORS_1 = set("+-*/%&|^~!<>?:=")
_PUNCTUATION = set("()[]{};,.#@")

_WS = set(" \t\r\n\f\v")
_ID_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_ID_CONT = _ID_START | set("0123456789$")
_DIGITS = set("0123456789")
_BASE_CHARS = set("bodhBODH")
_BASED_VALUE = set("0123456789abcdefABCDEF_xXzZ?")


def classify(token_text: str, lexicon: Lexicon = DEFAULT_LEXICON) -> TokenClass:
    """Classify a token string (possibly a decoded subword fragment).

    Matching is exact on the whitespace-trimmed string and case
    sensitive; anything outside the two lexicons is neutral.
    """
    text = token_text.strip()
    if text in lexicon.structural:
        return TokenClass.STRUCTURAL
    if text in lexicon.high_impact:
        return TokenClass.HIGH_IMPACT
    return TokenClass.NEUTRAL


def classify_stream(
    lexemes, lexicon: Lexicon = DEFAULT_LEXICON
) -> list[tuple[Lexeme, TokenClass]]:
    """Classify lexed tokens, dropping whitespace and comments."""
    return [
        (lx, classify(lx.text, lexicon))
        for lx in lexemes
        if lx.kind not in (LexKind.WHITESPACE, LexKind.COMMENT)
    ]


def load_lexicon(path) -> Lexicon:
    """Load a lexicon override file (``[structural]`` / ``[high_impact]``)."""
    structural: set[str] = set()
    high_impact: set[str] = set()
    section: set[str] | None = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[structural]":
            section = structural
            continue
        if line == "[high_impact]":
            section = high_impact
            continue
        if line.startswith("[") and line.endswith("]"):
            raise LexiconError(f"{path}:{lineno}: unknown section {line}")
        if section is None:
            raise LexiconError(f"{path}:{lineno}: token before any section header")
        section.add(line)
    return Lexicon(frozenset(structural), frozenset(high_impact))


def lex(source: str) -> list[Lexeme]:
    """Lex Verilog source text. Total: never raises on malformed input."""
    out: list[Lexeme] = []
    n = len(source)
    i = 0
    byte_pos = 0

    def emit(end: int, kind: LexKind):
        nonlocal i, byte_pos
        text = source[i:end]
        blen = len(text) if text.isascii() else len(text.encode("utf-8"))
        out.append(Lexeme(text, kind, (byte_pos, byte_pos + blen)))
        byte_pos += blen
        i = end

    while i < n:
        c = source[i]

        if c in _WS:
            j = i + 1
            while j < n and source[j] in _WS:
                j += 1
            emit(j, LexKind.WHITESPACE)
            continue

        if c == "/" and i + 1 < n:
            nc = source[i + 1]
            if nc == "/":
                j = source.find("\n", i)
                emit(n if j < 0 else j, LexKind.COMMENT)
                continue
            if nc == "*":
                j = source.find("*/", i + 2)
                emit(n if j < 0 else j + 2, LexKind.COMMENT)
                continue

        if c in _ID_START:
            j = i + 1
            while j < n and source[j] in _ID_CONT:
                j += 1
            word = source[i:j]
            kind = LexKind.KEYWORD if word in VERILOG_KEYWORDS else LexKind.IDENTIFIER
            emit(j, kind)
            continue

        if c in _DIGITS or (c == "'" and _based_literal_end(source, i) > i):
            emit(_number_end(source, i), LexKind.LITERAL)
            continue

        if c == '"':
            emit(_string_end(source, i), LexKind.LITERAL)
            continue

        if c == "(" and source.startswith("(*", i) and not source.startswith("(*)", i):
            j = source.find("*)", i + 2)
            if j >= 0:
                emit(j + 2, LexKind.OTHER)  # attribute instance span
                continue
            # unterminated attribute: fall through to a plain "("

        if c == "`":
            j = i + 1
            while j < n and source[j] in _ID_CONT:
                j += 1
            emit(j, LexKind.OTHER)  # compiler directive, not expanded
            continue

        if c == "$":
            j = i + 1
            while j < n and source[j] in _ID_CONT:
                j += 1
            emit(j, LexKind.OTHER)  # system task/function name
            continue

        if c == "\\":
            j = i + 1
            while j < n and source[j] not in _WS:
                j += 1
            emit(j, LexKind.OTHER)  # escaped identifier
            continue

        three = source[i:i + 3]
        if three in _OPERATORS_3:
            emit(i + 3, LexKind.OPERATOR)
            continue
        two = source[i:i + 2]
        if two in _OPERATORS_2:
            emit(i + 2, LexKind.OPERATOR)
            continue
        if c in _OPERATORS_1:
            emit(i + 1, LexKind.OPERATOR)
            continue
        if c in _PUNCTUATION:
            emit(i + 1, LexKind.PUNCTUATION)
            continue

        emit(i + 1, LexKind.OTHER)

    return out


def _based_literal_end(source: str, i: int) -> int:
    """End of a based literal starting at the ``'`` in position i, or i."""
    n = len(source)
    j = i + 1
    if j < n and source[j] in "sS":
        j += 1
    if j < n and source[j] in _BASE_CHARS:
        j += 1
        k = j
        while k < n and source[k] in _BASED_VALUE:
            k += 1
        if k > j:
            return k
    return i


def _number_end(source: str, i: int) -> int:
    n = len(source)
    j = i
    while j < n and (source[j] in _DIGITS or source[j] == "_"):
        j += 1
    if j < n and source[j] == "'":
        k = _based_literal_end(source, j)
        if k > j:
            return k
    if j + 1 < n and source[j] == "." and source[j + 1] in _DIGITS:
        j += 1
        while j < n and (source[j] in _DIGITS or source[j] == "_"):
            j += 1
    if j < n and source[j] in "eE":
        k = j + 1
        if k < n and source[k] in "+-":
            k += 1
        if k < n and source[k] in _DIGITS:
            j = k
            while j < n and source[j] in _DIGITS:
                j += 1
    return j


def _string_end(source: str, i: int) -> int:
    n = len(source)
    j = i + 1
    while j < n:
        if source[j] == "\\":
            j += 2
            continue
        if source[j] == '"':
            return j + 1
        j += 1
    return n  # unterminated string runs to end of input

"""Shared fixture builders for the test suite."""

import numpy as np

from decortl.backend import MockBackend, MockModelSpec


def build_spec(tokens, *, dim=4, eos=None, default=None, ctx=None, steps=None,
               order=1, embed_seed=0, embeddings=None):
    """Assemble a MockModelSpec from keyword pieces.

    Unspecified embeddings are drawn from a seeded normal distribution;
    unspecified default logits are all zero (uniform distribution).
    """
    tokens = tuple(tokens)
    n = len(tokens)
    if eos is None:
        eos = n - 1
    if embeddings is None:
        rng = np.random.default_rng(embed_seed)
        embeddings = rng.normal(size=(n, dim))
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if default is None:
        default = np.zeros(n)
    rule = "steps" if steps is not None else "ngram"
    return MockModelSpec(
        tokens=tokens,
        dim=embeddings.shape[1],
        eos_id=eos,
        embeddings=embeddings,
        rule=rule,
        order=None if steps is not None else order,
        default_logits=np.asarray(default, dtype=np.float64),
        ctx_logits={
            tuple(k) if isinstance(k, (tuple, list)) else (k,): np.asarray(v, dtype=np.float64)
            for k, v in (ctx or {}).items()
        },
        step_logits={int(k): np.asarray(v, dtype=np.float64) for k, v in (steps or {}).items()},
    )


def build_backend(tokens, **kwargs) -> MockBackend:
    return MockBackend(build_spec(tokens, **kwargs))


def one_hot_logits(n, hot, high=1000.0):
    """Logits so peaked that softmax underflows to an exact one-hot."""
    row = np.zeros(n)
    row[hot] = high
    return row


def scripted_backend(tokens, script, *, dim=4, eos=None, embed_seed=0):
    """Backend that deterministically emits `script` under any strategy."""
    n = len(tokens)
    steps = {t: one_hot_logits(n, hot) for t, hot in enumerate(script)}
    return build_backend(tokens, dim=dim, eos=eos, steps=steps, embed_seed=embed_seed)


VERILOGISH_TOKENS = (
    "module", " ", "assign", "+", "x", "y", ";", "=", "w1", "w2",
    "(", ")", "<eos>",
)

_BIN_OPS = ("+", "-", "&", "|", "^")
_CMP_OPS = ("==", "!=", "<", ">=")


def synth_module(rng, idx: int) -> str:
    """One random-but-plausible Verilog module (seeded, deterministic)."""
    width = int(rng.integers(2, 9))
    ins = [f"in{j}" for j in range(int(rng.integers(2, 5)))]
    lines = [f"module mod_{idx} #(parameter W = {width}) ("]
    lines += ["    input wire clk,", "    input wire rst,"]
    lines += [f"    input wire [W-1:0] {p}," for p in ins]
    lines += ["    output reg [W-1:0] q", ");"]
    wires = [f"t{j}" for j in range(int(rng.integers(1, 4)))]
    lines += [f"    wire [W-1:0] {w};" for w in wires]
    operands = ins + wires
    for w in wires:
        a = operands[int(rng.integers(0, len(ins)))]
        b = operands[int(rng.integers(0, len(ins)))]
        op = _BIN_OPS[int(rng.integers(0, len(_BIN_OPS)))]
        lines.append(f"    assign {w} = {a} {op} {b};")
    src = operands[int(rng.integers(0, len(operands)))]
    flavor = int(rng.integers(0, 3))
    if flavor == 0:
        cmp_op = _CMP_OPS[int(rng.integers(0, len(_CMP_OPS)))]
        lines += [
            "    always @(posedge clk) begin",
            "        if (rst)",
            f"            q <= {{W{{1'b0}}}};",
            f"        else if ({src} {cmp_op} {ins[0]})",
            f"            q <= {src} + 1'b1;",
            "        else",
            f"            q <= {src};",
            "    end",
        ]
    elif flavor == 1:
        lines += [
            "    always @(posedge clk or negedge rst) begin",
            "        if (!rst)",
            "            q <= 0;",
            "        else",
            f"            q <= {src} ? ~{ins[0]} : {src};",
            "    end",
        ]
    else:
        lines += [
            "    always @(posedge clk) begin",
            f"        case ({src}[1:0])",
            f"            2'b00: q <= {ins[0]};",
            f"            2'b01: q <= {src} ^ {ins[0]};",
            f"            default: q <= {src};",
            "        endcase",
            "    end",
        ]
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def synth_corpus(seed: int, count: int) -> list[str]:
    rng = np.random.default_rng(seed)
    return [synth_module(rng, i) for i in range(count)]


def write_corpus(directory, sources) -> list:
    """Write module sources as .v files; returns the file paths."""
    paths = []
    for i, src in enumerate(sources):
        path = directory / f"mod_{i:03d}.v"
        path.write_text(src, encoding="utf-8")
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Temperature-exploration fixture
#
# A position-scripted mock with two kinds of stochastic choice points:
# after "=" (high impact) the wanted token sits BELOW the argmax, so raising
# the temperature helps; after ";" (structural) the wanted token IS the
# argmax with a close distractor, so lowering the temperature helps. No
# single fixed temperature wins both, which is exactly the regime the
# adaptive rule targets. Task i's rows live at disjoint step positions
# (prompt padding) and its script starts with i filler emissions, so
# different tasks consume different draws from the shared per-sample seed
# stream at their choice points; a small seeded logit jitter decorrelates
# them further. A sample passes iff it contains EXPLORE_NEEDLE, i.e. every
# choice went the wanted way.

EXPLORE_TOKENS = (
    ".", "assign", "x", "=", ";", "alpha", "beta0",
    "w1", "w2", "w3", "w4", "<eos>",
)
EXPLORE_NEEDLE = "=alpha;w1;w3"


def explore_spacing(n_tasks: int) -> int:
    return n_tasks + 9  # filler run (< n_tasks) + 8 stage rows, no overlap


def explore_prompt(i: int, n_tasks: int) -> str:
    return "." * (explore_spacing(n_tasks) * i) + "assign"


def exploration_backend(n_tasks: int, *, jitter=0.15, jitter_seed=5) -> MockBackend:
    tid = {t: i for i, t in enumerate(EXPLORE_TOKENS)}
    n = len(EXPLORE_TOKENS)
    rng = np.random.default_rng(jitter_seed)

    def row(**weights):
        r = np.full(n, -8.0)
        for name, w in weights.items():
            r[tid[name]] = w
        return r

    glue_x = row(x=8.0)
    glue_eq = row(**{"=": 8.0})
    glue_semi = row(**{";": 8.0})
    eos_row = row(**{"<eos>": 9.0})
    steps = {}
    for i in range(n_tasks):
        base = explore_spacing(n_tasks) * i + 1  # context length at step 0
        j = lambda: float(rng.uniform(-jitter, jitter))
        stage_rows = [glue_x] * i + [
            glue_x,
            glue_eq,
            row(beta0=3.0, alpha=1.8 + j()),  # explore: alpha is 2nd best
            glue_semi,
            row(w1=3.0, w2=2.5 + j()),        # precision: w1 is argmax
            glue_semi,
            row(w3=3.0, w4=2.5 + j()),        # precision
            eos_row,
        ]
        for t, logits in enumerate(stage_rows):
            steps[base + t] = logits
    return build_backend(
        EXPLORE_TOKENS, steps=steps, default=eos_row, eos=tid["<eos>"], dim=4,
    )

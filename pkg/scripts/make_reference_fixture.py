#!/usr/bin/env python3
"""Build the deterministic mock-model fixtures used by tests and demos.

Writes ``fixtures/reference.mm`` (the 8192-token clustered-embedding
model) and ``fixtures/tiny.mm`` (a 12-token model small enough to read).

The reference model is engineered around three row personalities, keyed
off the last emitted token (1-gram rule):

* calm rows (ids 16..23): one spike at logit 9 chaining to the next calm
  id, everything else at -8. Near-zero entropy; absorbing under every
  strategy.
* mid rows (ids 24..31): ten candidates at logit 2 -- one calm entry,
  six mids, three wilds -- over a 256-token tail at 0 that leads back to
  the wild region. Calm-entry ids sit below mid ids so equal
  probabilities tie-break them into the top five.
* the default row, which is the wild region: 512 block tokens at 0 with
  the first five tilted to 0.4, the rest of the vocabulary at -8. Block
  tokens have no rows of their own, so wild chains to wild.

Embeddings cluster so that contrastive re-ranking always escapes: mid
candidates share one direction while the calm entry points the opposite
way, and the four plain tilt tokens share a direction the mid-entry
token opposes. Lowest similarity to the candidate mean wins, so the
contrastive pick is the escape token, deterministically. Samplers only
stumble onto those ids, which separates the pooled entropies of
contrastive, top-k and nucleus decoding by construction.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from decortl.backend import MockModelSpec, load_backend, write_mock_spec

ROOT = Path(__file__).resolve().parent.parent

N_VOCAB = 8192
DIM = 8
EOS_ID = N_VOCAB - 1

CALM_IDS = tuple(range(16, 24))
MID_IDS = tuple(range(24, 32))
WILD_BLOCK = tuple(range(1024, 1536))
TILT_IDS = WILD_BLOCK[:5]          # slightly favored inside the wild row
MID_ENTRY = TILT_IDS[-1]           # the one tilt token that leads out
MID_TAIL = tuple(range(1152, 1408))  # mid-row tail, chains back to wild

LOW, FLAT, TILT, MID_TOP, SPIKE = -8.0, 0.0, 0.4, 2.0, 9.0
CALM_ENTRY_BOOST = 0.05  # keeps the calm entry on top of the mid band
JITTER = 0.03  # per-token logit noise; breaks constant runs in every row


def _tokens() -> tuple[str, ...]:
    named = {
        0: "module", 1: " ", 2: "top", 3: "(", 4: ")", 5: ";", 6: "\n",
        7: "assign", 8: "=", 9: "always", 10: "@", 11: "posedge",
        12: "clk", 13: "begin", 14: "end", 15: "endmodule",
    }
    for j, tid in enumerate(CALM_IDS):
        named[tid] = f" q{j}"
    for j, tid in enumerate(MID_IDS):
        named[tid] = f" m{j}"
    for j, tid in enumerate(WILD_BLOCK):
        named[tid] = f" v{j:04d}"
    named[EOS_ID] = "<eos>"
    return tuple(
        named.get(i, f" n{i:04d}") for i in range(N_VOCAB)
    )


def _embeddings(rng: np.random.Generator) -> np.ndarray:
    emb = rng.normal(size=(N_VOCAB, DIM))
    u = np.zeros(DIM); u[0] = 1.0   # mid cluster axis
    v = np.zeros(DIM); v[1] = 1.0   # wild tilt cluster axis
    for tid in MID_IDS:
        emb[tid] = u + 0.15 * rng.normal(size=DIM)
    for tid in CALM_IDS:
        emb[tid] = -u + 0.15 * rng.normal(size=DIM)
    for tid in TILT_IDS[:-1]:
        emb[tid] = v + 0.15 * rng.normal(size=DIM)
    emb[MID_ENTRY] = -v + 0.15 * rng.normal(size=DIM)
    emb = np.round(emb, 3)
    # rounding must not zero a row: nudge any casualty back to life
    dead = np.flatnonzero(np.linalg.norm(emb, axis=1) == 0.0)
    emb[dead, 0] = 0.5
    return emb


def _finish(row: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # constant rows sort suspiciously fast (stable mergesort exploits the
    # runs), which would flatter per-token timings; jitter every band so
    # sort cost matches a real logit vector. Band gaps dwarf the noise.
    row = row + (rng.random(N_VOCAB) - 0.5) * JITTER
    row[EOS_ID] = -9.0
    return np.round(row, 4)


def _default_row() -> np.ndarray:
    row = np.full(N_VOCAB, LOW)
    row[list(WILD_BLOCK)] = FLAT
    row[list(TILT_IDS)] = TILT
    return row


def _calm_row(j: int) -> np.ndarray:
    row = np.full(N_VOCAB, LOW)
    row[CALM_IDS[(j + 1) % len(CALM_IDS)]] = SPIKE
    return row


def _mid_row(j: int) -> np.ndarray:
    row = np.full(N_VOCAB, LOW)
    n = len(MID_IDS)
    ten = [CALM_IDS[j]]
    ten += [MID_IDS[(j + d) % n] for d in range(1, 7)]
    ten += [WILD_BLOCK[6 + 3 * j + d] for d in range(3)]
    row[ten] = MID_TOP
    row[CALM_IDS[j]] += CALM_ENTRY_BOOST
    row[list(MID_TAIL)] = FLAT
    return row


def build_reference() -> MockModelSpec:
    rng = np.random.default_rng(20240817)
    ctx = {}
    for j, tid in enumerate(CALM_IDS):
        ctx[(tid,)] = _finish(_calm_row(j), rng)
    for j, tid in enumerate(MID_IDS):
        ctx[(tid,)] = _finish(_mid_row(j), rng)
    ctx[(MID_ENTRY,)] = _finish(_mid_row(0), rng)
    return MockModelSpec(
        tokens=_tokens(),
        dim=DIM,
        eos_id=EOS_ID,
        embeddings=_embeddings(rng),
        rule="ngram",
        order=1,
        default_logits=_finish(_default_row(), rng),
        ctx_logits=ctx,
    )


TINY = '''\
# A 12-token mock model, small enough to read end to end. The next-token
# rule keys on the last context id (ngram order 1); anything without a
# matching `logits ctx` row falls back to the default row.
mockmodel v1
dim 3
eos 11
token "module"
token " "
token "top"
token ";"
token "\\n"
token "assign"
token "="
token "a"
token "b"
token "endmodule"
token "("
token "<eos>"
embed 0 1.0 0.0 0.0
embed 1 0.0 1.0 0.0
embed 2 0.0 0.0 1.0
embed 3 1.0 1.0 0.0
embed 4 0.0 1.0 1.0
embed 5 1.0 0.0 1.0
embed 6 -1.0 0.0 0.0
embed 7 0.0 -1.0 0.0
embed 8 0.0 0.0 -1.0
embed 9 -1.0 -1.0 0.0
embed 10 0.0 -1.0 -1.0
embed 11 -1.0 0.0 -1.0
rule ngram 1
logits default 0.5 2.0 0.5 1.0 1.5 1.0 0.5 1.0 1.0 0.5 0.2 0.1
logits ctx 0 -4.0 6.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0
logits ctx 1 -4.0 -4.0 3.0 -4.0 -4.0 2.5 -4.0 2.0 2.0 -4.0 -4.0 -4.0
logits ctx 2 -4.0 -4.0 -4.0 5.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0
logits ctx 3 -4.0 -4.0 -4.0 -4.0 5.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0
logits ctx 4 -4.0 1.0 -4.0 -4.0 -4.0 3.0 -4.0 -4.0 -4.0 2.0 -4.0 -4.0
logits ctx 9 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 -4.0 8.0
'''


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=ROOT / "fixtures")
    ap.add_argument("--skip-check", action="store_true",
                    help="skip the entropy-ordering smoke check")
    args = ap.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    ref_path = args.out_dir / "reference.mm"
    write_mock_spec(build_reference(), ref_path)
    tiny_path = args.out_dir / "tiny.mm"
    tiny_path.write_text(TINY, encoding="utf-8")
    print(f"wrote {ref_path} ({ref_path.stat().st_size / 1e6:.2f} MB)")
    print(f"wrote {tiny_path} ({tiny_path.stat().st_size} bytes)")

    if args.skip_check:
        return
    from decortl.analysis import summarize, trace_entropy
    from decortl.decoding import Contrastive, DecodeConfig, Nucleus, TopK, strategy_label

    backend = load_backend(ref_path)
    prompts = [[MID_IDS[i % 8]] for i in range(20)]
    prompts += [[WILD_BLOCK[40 + 17 * i]] for i in range(20)]
    for strat in (Contrastive(5, 0.5), TopK(10), Nucleus(0.9)):
        cfg = DecodeConfig(strategy=strat, base_temperature=0.7,
                           max_tokens=64, seed=0)
        traces = trace_entropy(backend, cfg, prompts)
        stats = summarize(traces, strategy_label(strat))
        print(f"  pooled mean entropy {stats.strategy:<24} {stats.mean:.4f}")


if __name__ == "__main__":
    main()

"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import sys
import timeit

import numpy as np

from grammaraug import _backend
from grammaraug.candgen import CommandSet, generate_candidates
from grammaraug.ctc import DEFAULT_ALPHABET, encode_many
from grammaraug.evaluation import Column, Evaluator, ScoreMatrix
from grammaraug.prondict import PronDictionary
from grammaraug.sim import DEFAULT_COMMANDS, DEFAULT_CONFUSIONS, ConfusionTable, SimConfig, render_utterance


def candidates():
    counts = {w: {v: int(p * 1000) for v, p in d.items()} for w, d in DEFAULT_CONFUSIONS.items()}
    totals = {w: sum(c.values()) for w, c in counts.items()}
    return generate_candidates(CommandSet(DEFAULT_COMMANDS), PronDictionary.from_counts(counts, totals), k=8, cap=150)


def ctc_case(n_utts=40):
    cands = candidates()
    flat, offsets = encode_many(cands.texts, DEFAULT_ALPHABET)
    rng = np.random.default_rng(0)
    table = ConfusionTable(DEFAULT_CONFUSIONS)
    logps = [np.log(render_utterance(DEFAULT_COMMANDS[i % 5], table, SimConfig(), rng).frames)
             for i in range(n_utts)]

    def run(k):
        for lp in logps:
            k.ctc_logprob_many(lp, flat, offsets, DEFAULT_ALPHABET.blank_index)

    return f"ctc_logprob_many: 150 candidates x {n_utts} utterances", run


def eval_case(n_in=1000, n_ood=1000, n_masks=200):
    cands = candidates()
    rng = np.random.default_rng(1)
    scores = -rng.gamma(2.0, 20.0, size=(len(cands), n_in + n_ood))
    cols = [Column(f"i{j}", True, j % 5, "train") for j in range(n_in)]
    cols += [Column(f"o{j}", False) for j in range(n_ood)]
    ev = Evaluator(ScoreMatrix(scores, cols, cands), alpha=0.001)
    masks = []
    for _ in range(n_masks):
        mask = rng.random(len(cands)) < 0.3
        mask[cands.original_indices] = True
        masks.append(np.flatnonzero(mask).astype(np.int64))

    def run(k):
        for rows in masks:
            k.eval_counts(ev.in_scores, ev.ood_scores, rows, ev.row_cmd, ev.targets, ev.n_cmd, ev.n_allowed)

    return f"eval_counts: {n_masks} masks, {n_in}+{n_ood} columns", run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"python": _backend.python_kernels}
    if _backend.compiled_kernels is None:
        print("compiled extension not built; timing the fallback only", file=sys.stderr)
    else:
        backends["cython"] = _backend.compiled_kernels

    print(f"{'case':<52} {'backend':<8} {'best (s)':>10} {'speedup':>8}")
    for label, run in (ctc_case(), eval_case()):
        times = {name: min(timeit.repeat(lambda k=k: run(k), number=1, repeat=args.repeat))
                 for name, k in backends.items()}
        for name, t in times.items():
            print(f"{label:<52} {name:<8} {t:>10.4f} {times['python'] / t:>7.1f}x")


if __name__ == "__main__":
    main()

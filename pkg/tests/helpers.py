"""Independent oracles and toy-problem builders shared by the test modules."""
import functools
import itertools

import numpy as np

from grammaraug.candgen import CommandSet, generate_candidates
from grammaraug.ctc import Alphabet, Posteriorgram, squash
from grammaraug.evaluation import Utterance, precompute_scores
from grammaraug.prondict import PronDictionary
from grammaraug.sim import DEFAULT_COMMANDS, DEFAULT_CONFUSIONS, DEFAULT_OOD_TEXTS, ConfusionTable, SimConfig, render_utterance


def brute_ctc_prob(frames, alphabet, g):
    """Sum of path probabilities over every length-T path that squashes to ``g``."""
    T, V = frames.shape
    total = 0.0
    for path in itertools.product(range(V), repeat=T):
        if squash(path, alphabet) == g:
            total += float(np.prod(frames[np.arange(T), list(path)]))
    return total


def random_posteriorgram(rng, T, V):
    alphabet = Alphabet("abcdefghij"[: V - 1], blank_index=int(rng.integers(V)))
    frames = rng.dirichlet(np.full(V, 0.7), size=T)
    return Posteriorgram(frames, alphabet)


def levenshtein_oracle(a, b):
    a, b = tuple(a), tuple(b)

    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def threshold_oracle(ood_max, alpha):
    """Scan every attainable threshold (and -inf) and keep the smallest admissible one."""
    n = len(ood_max)
    admissible = [t for t in [-np.inf] + sorted(set(ood_max)) if sum(v > t for v in ood_max) / n < alpha]
    return min(admissible)


def evaluate_oracle(scores, columns, row_cmd, mask, alpha, beta, split=None):
    """Plain-loop evaluation of one grammar, written from the definitions."""
    rows = [i for i in range(len(mask)) if mask[i]]
    ood = [j for j, c in enumerate(columns) if not c.in_domain]
    ind = [j for j, c in enumerate(columns) if c.in_domain and (split is None or c.split == split)]
    ood_max = [max(scores[i][j] for i in rows) for j in ood]
    tau = threshold_oracle(ood_max, alpha)
    n_phi = n_wrong = 0
    for j in ind:
        best_by_cmd = {}
        for i in rows:
            c = row_cmd[i]
            best_by_cmd[c] = max(best_by_cmd.get(c, -np.inf), scores[i][j])
        top = max(best_by_cmd.values())
        if top <= tau:
            n_phi += 1
            continue
        decoded = min(c for c, v in best_by_cmd.items() if v == top)
        if decoded != columns[j].target:
            n_wrong += 1
    return tau, (n_wrong + beta * n_phi) / len(ind), n_phi, n_wrong


def dictionary_from_table(table, scale=1000):
    """Dictionary whose frequencies equal the confusion probabilities."""
    counts, totals = {}, {}
    for word, dist in table.items():
        counts[word] = {v: int(round(p * scale)) for v, p in dist.items()}
        totals[word] = sum(counts[word].values())
    return PronDictionary.from_counts(counts, totals)


def _cross_phrases(commands, rng, n):
    """Variant words from one command glued to words of another: close to, but not, candidates."""
    firsts = [list(DEFAULT_CONFUSIONS[c.text.split()[0]]) for c in commands]
    seconds = ["music", "song", "musik", "son", "mesic", "sung", "magic", "sound"]
    out = []
    while len(out) < n:
        words = firsts[int(rng.integers(len(firsts)))]
        text = f"{words[int(rng.integers(len(words)))]} {seconds[int(rng.integers(len(seconds)))]}"
        if text not in {c.text for c in commands}:
            out.append(text)
    return out


def toy_problem(seed, n_free=12, n_commands=3, per_command=24, n_ood=60):
    """Small simulated instance with at most ``n_free`` non-original candidates."""
    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(len(DEFAULT_COMMANDS), n_commands, replace=False))
    commands = CommandSet([DEFAULT_COMMANDS[i] for i in picks])
    d = dictionary_from_table(DEFAULT_CONFUSIONS)
    cands = generate_candidates(commands, d, k=3, cap=n_commands + n_free)
    table = ConfusionTable(DEFAULT_CONFUSIONS)
    cfg = SimConfig(rng_seed=seed)
    utts = []
    for cmd in commands:
        for n in range(per_command):
            split = "train" if n % 2 == 0 else "validation"
            pg = render_utterance(cmd.text, table, cfg, rng)
            utts.append(Utterance(f"c{cmd.command_id}_{n}", pg, True, cmd.command_id, split))
    ood_texts = list(DEFAULT_OOD_TEXTS) + _cross_phrases(commands, rng, 12)
    for n in range(n_ood):
        text = ood_texts[int(rng.integers(len(ood_texts)))]
        utts.append(Utterance(f"o{n}", render_utterance(text, table, cfg, rng), False))
    return precompute_scores(cands, utts)


def random_matrix(rng, n_cmd=3, per_cmd=4, n_in=30, n_ood=40, splits=("train",)):
    """Random score matrix with coarse values (so ties occur) and some -inf cells."""
    from grammaraug.candgen import Candidate, CandidateSet
    from grammaraug.evaluation import Column, ScoreMatrix

    commands = CommandSet([f"c{i}" for i in range(n_cmd)])
    cands = []
    for c in range(n_cmd):
        for v in range(per_cmd):
            cands.append(Candidate(len(cands), f"c{c}" if v == 0 else f"c{c} v{v}", c, v == 0))
    R = len(cands)
    scores = -rng.integers(0, 12, size=(R, n_in + n_ood)).astype(float) / 2
    scores[rng.random(scores.shape) < 0.1] = -np.inf
    columns = [Column(f"i{j}", True, int(rng.integers(n_cmd)), splits[j % len(splits)]) for j in range(n_in)]
    columns += [Column(f"o{j}", False) for j in range(n_ood)]
    return ScoreMatrix(scores, columns, CandidateSet(commands, cands))


def random_mask(rng, m, p=0.5):
    mask = rng.random(len(m.candidates)) < p
    mask[m.candidates.original_indices] = True
    return mask


@functools.lru_cache(maxsize=None)
def cached_toy(seed, n_free=12):
    return toy_problem(seed, n_free=n_free)


def hand_matrix(texts, cmd_of, in_scores, targets, ood_scores, splits=None):
    """Score matrix from explicit rows; ``texts[i]`` is original iff it is the first text of its command."""
    from grammaraug.candgen import Candidate, CandidateSet
    from grammaraug.evaluation import Column, ScoreMatrix

    names = {}
    for t, c in zip(texts, cmd_of):
        names.setdefault(c, t)
    commands = CommandSet([names[c] for c in sorted(names)])
    cands = CandidateSet(commands, [Candidate(i, t, c, names[c] == t) for i, (t, c) in enumerate(zip(texts, cmd_of))])
    splits = splits or ["train"] * len(targets)
    cols = [Column(f"i{j}", True, t, s) for j, (t, s) in enumerate(zip(targets, splits))]
    cols += [Column(f"o{j}", False) for j in range(np.shape(ood_scores)[1])]
    return ScoreMatrix(np.hstack([np.asarray(in_scores, float), np.asarray(ood_scores, float)]), cols, cands)

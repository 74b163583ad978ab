"""Word-level Levenshtein alignment of a reference transcript to a decoding."""
from dataclasses import dataclass
from enum import Enum


class Op(str, Enum):
    MATCH = "match"
    SUBSTITUTE = "substitute"
    DELETE = "delete"
    INSERT = "insert"


@dataclass(frozen=True)
class AlignedPair:
    truth: str  # "" for insertions
    decoded: str  # "" for deletions
    op: Op


def edit_table(truth, decoded):
    n, m = len(truth), len(decoded)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if truth[i - 1] == decoded[j - 1] else 1
            d[i][j] = min(d[i - 1][j - 1] + cost, d[i - 1][j] + 1, d[i][j - 1] + 1)
    return d


def align_words(truth, decoded):
    """Minimum-edit alignment between two word sequences.

    Strings are split on whitespace. The backtrace prefers, in order: match,
    substitute, delete, insert, so the result is deterministic.
    """
    if isinstance(truth, str):
        truth = truth.split()
    if isinstance(decoded, str):
        decoded = decoded.split()
    truth, decoded = list(truth), list(decoded)
    d = edit_table(truth, decoded)
    pairs = []
    i, j = len(truth), len(decoded)
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = truth[i - 1] == decoded[j - 1]
            if d[i][j] == d[i - 1][j - 1] + (0 if same else 1):
                pairs.append(AlignedPair(truth[i - 1], decoded[j - 1], Op.MATCH if same else Op.SUBSTITUTE))
                i, j = i - 1, j - 1
                continue
        if i > 0 and d[i][j] == d[i - 1][j] + 1:
            pairs.append(AlignedPair(truth[i - 1], "", Op.DELETE))
            i -= 1
        else:
            pairs.append(AlignedPair("", decoded[j - 1], Op.INSERT))
            j -= 1
    pairs.reverse()
    return pairs


def edit_cost(pairs):
    return sum(p.op is not Op.MATCH for p in pairs)


def alignment_tsv(pairs):
    """Debug dump: one ``truth<TAB>decoded<TAB>op`` line per pair."""
    return "".join(f"{p.truth}\t{p.decoded}\t{p.op.value}\n" for p in pairs)

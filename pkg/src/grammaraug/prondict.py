"""AM-specific statistical pronunciation dictionary.

For every reference word, counts how the acoustic model's greedy decoding
renders it, using a word alignment between transcript and decoding.
"""
import csv
import json
import logging
import os
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .align import Op, align_words
from .ctc import DEFAULT_ALPHABET, PosteriorgramError, greedy_decode, load_posteriorgram

log = logging.getLogger(__name__)

_STRIP = re.compile(r"[^\w\s']|_")


def normalize_words(text):
    """Lowercase, drop punctuation other than apostrophes, split on whitespace."""
    return _STRIP.sub("", text.lower()).split()


@dataclass(frozen=True)
class Variant:
    text: str
    count: int
    frequency: float


@dataclass
class PronDictionary:
    """word -> variants sorted by descending frequency (ties lexicographic)."""

    entries: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    @classmethod
    def from_counts(cls, counts, totals, min_count=1, skipped=()):
        entries = {}
        for word in sorted(totals):
            total = totals[word]
            kept = [(v, c) for v, c in counts.get(word, {}).items() if c >= min_count and v]
            kept.sort(key=lambda vc: (-vc[1], vc[0]))
            entries[word] = [Variant(v, c, c / total) for v, c in kept]
        return cls(entries, dict(totals), list(skipped))

    def __contains__(self, word):
        return word in self.entries

    def __getitem__(self, word):
        return self.entries[word]

    def frequency(self, word, variant):
        for v in self.entries.get(word, ()):
            if v.text == variant:
                return v.frequency
        return None

    def to_tsv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["word", "variant", "count", "frequency"])
            for word, variants in self.entries.items():
                for v in variants:
                    w.writerow([word, v.text, v.count, repr(v.frequency)])

    @classmethod
    def from_tsv(cls, path):
        entries = defaultdict(list)
        totals = {}
        with open(path, newline="") as fh:
            rows = csv.reader(fh, delimiter="\t")
            header = next(rows, None)
            if header != ["word", "variant", "count", "frequency"]:
                raise ValueError(f"{path}: unexpected header {header}")
            for word, variant, count, freq in rows:
                count, freq = int(count), float(freq)
                entries[word].append(Variant(variant, count, freq))
                totals.setdefault(word, round(count / freq))
        for variants in entries.values():
            variants.sort(key=lambda v: (-v.frequency, v.text))
        return cls(dict(entries), totals)


class DictionaryBuilder:
    """Accumulates alignment counts; shards merge by simple addition."""

    def __init__(self):
        self.counts = defaultdict(Counter)
        self.totals = Counter()
        self.skipped = []

    def add(self, transcript, decoding):
        for pair in align_words(normalize_words(transcript), decoding.split()):
            if pair.op in (Op.MATCH, Op.SUBSTITUTE):
                self.counts[pair.truth][pair.decoded] += 1
                self.totals[pair.truth] += 1
            elif pair.op is Op.DELETE:
                self.totals[pair.truth] += 1

    def merge(self, other):
        for word, c in other.counts.items():
            self.counts[word].update(c)
        self.totals.update(other.totals)
        self.skipped.extend(other.skipped)
        return self

    def build(self, min_count=1):
        return PronDictionary.from_counts(self.counts, self.totals, min_count, self.skipped)


def build_dictionary(corpus, min_count=1):
    """Build a dictionary from ``(posteriorgram, transcript)`` pairs.

    A posteriorgram may also be given as a zero-argument loader, and an item
    may carry an utterance id as a third element. Items that fail to load or
    validate are skipped and listed in ``skipped``.
    """
    builder = DictionaryBuilder()
    for n, (pg, transcript, *rest) in enumerate(corpus):
        try:
            if callable(pg):
                pg = pg()
            pg.validate()
        except (PosteriorgramError, OSError) as exc:
            uid = (rest[0] if rest else None) or getattr(pg, "utterance_id", None) or f"#{n}"
            log.warning("skipping utterance %s: %s", uid, exc)
            builder.skipped.append((uid, str(exc)))
            continue
        builder.add(transcript, greedy_decode(pg))
    return builder.build(min_count)


def read_manifest(path):
    """Yield manifest records with ``posteriorgram_path`` resolved against the manifest directory."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            rec["posteriorgram_path"] = os.path.join(base, rec["posteriorgram_path"])
            yield rec


def build_dictionary_from_manifest(path, min_count=1, alphabet=DEFAULT_ALPHABET):
    def items():
        for rec in read_manifest(path):
            yield (
                lambda r=rec: load_posteriorgram(r["posteriorgram_path"], alphabet, r["utterance_id"]),
                rec["transcript"],
                rec["utterance_id"],
            )

    return build_dictionary(items(), min_count)


def top_k_variants(d, word, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    variants = d.entries.get(word)
    if not variants:
        return [word]
    return [v.text for v in variants[:k]]


def coverage_k(d, word, target):
    """Smallest k whose top-k frequencies reach ``target``; the full length if none does."""
    if not 0 < target <= 1:
        raise ValueError("target must lie in (0, 1]")
    variants = d.entries.get(word, [])
    acc = 0.0
    for k, v in enumerate(variants, 1):
        acc += v.frequency
        if acc >= target - 1e-12:
            return k
    return len(variants)

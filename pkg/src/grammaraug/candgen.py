"""Candidate grammar set: cartesian product of per-word variant lists."""
import itertools
import json
from dataclasses import asdict, dataclass

from .prondict import coverage_k, normalize_words, top_k_variants


class AmbiguousGrammarError(ValueError):
    pass


@dataclass(frozen=True)
class Command:
    command_id: int
    text: str


@dataclass(frozen=True)
class Candidate:
    index: int
    text: str
    command_id: int
    is_original: bool


class CommandSet:
    def __init__(self, texts):
        texts = [" ".join(normalize_words(t)) for t in texts]
        if any(not t for t in texts):
            raise ValueError("command texts must be non-empty")
        if len(set(texts)) != len(texts):
            raise ValueError("command texts must be unique")
        self.commands = [Command(i, t) for i, t in enumerate(texts)]

    def __len__(self):
        return len(self.commands)

    def __iter__(self):
        return iter(self.commands)

    def __getitem__(self, i):
        return self.commands[i]

    def id_of(self, text):
        text = " ".join(normalize_words(text))
        for c in self.commands:
            if c.text == text:
                return c.command_id
        raise KeyError(text)

    @classmethod
    def from_file(cls, path):
        """One command per line; blank lines and ``#`` comments ignored."""
        with open(path) as fh:
            lines = [ln.strip() for ln in fh]
        return cls([ln for ln in lines if ln and not ln.startswith("#")])


class CandidateSet:
    def __init__(self, commands, candidates):
        self.commands = commands
        self.candidates = list(candidates)
        texts = [c.text for c in self.candidates]
        if len(set(texts)) != len(texts):
            raise AmbiguousGrammarError("candidate texts must be unique")
        originals = {c.command_id for c in self.candidates if c.is_original}
        if originals != {c.command_id for c in commands}:
            raise ValueError("every command needs its original text among the candidates")

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]

    @property
    def texts(self):
        return [c.text for c in self.candidates]

    @property
    def command_ids(self):
        return [c.command_id for c in self.candidates]

    @property
    def original_indices(self):
        return [c.index for c in self.candidates if c.is_original]

    def to_json(self):
        return {
            "commands": [asdict(c) for c in self.commands],
            "candidates": [asdict(c) for c in self.candidates],
        }

    @classmethod
    def from_json(cls, obj):
        commands = CommandSet([c["text"] for c in sorted(obj["commands"], key=lambda c: c["command_id"])])
        cands = [
            Candidate(int(c["index"]), c["text"], int(c["command_id"]), bool(c["is_original"]))
            for c in obj["candidates"]
        ]
        if [c.index for c in cands] != list(range(len(cands))):
            raise ValueError("candidate indices must be dense from 0")
        return cls(commands, cands)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def word_variants(d, word, k=None, coverage=None):
    """Variant list for one word, always containing the word itself first."""
    if (k is None) == (coverage is None):
        raise ValueError("give exactly one of k or coverage")
    if coverage is not None:
        k = max(1, coverage_k(d, word, coverage))
    variants = top_k_variants(d, word, k)
    return [word] + [v for v in variants if v != word]


def _weight(d, word, variant):
    f = d.frequency(word, variant)
    if f is None:
        return 1.0 if variant == word else 0.0
    return f


def generate_candidates(commands, d, k=None, coverage=None, cap=None):
    """Build the candidate set for ``commands``.

    ``k`` (an int, or a dict word -> int) or ``coverage`` picks each word's
    variant list. With ``cap``, the originals are always kept and the rest are
    ranked by the product of their variant frequencies.
    """
    rows = []  # (text, command_id, is_original, weight)
    owner = {}
    for cmd in commands:
        words = cmd.text.split()
        lists = []
        for w in words:
            kw = k.get(w, 1) if isinstance(k, dict) else k
            lists.append(word_variants(d, w, kw, coverage if kw is None else None))
        for combo in itertools.product(*lists):
            text = " ".join(combo)
            if text in owner:
                raise AmbiguousGrammarError(
                    f"{text!r} generated by both {commands[owner[text]].text!r} and {cmd.text!r}"
                )
            owner[text] = cmd.command_id
            weight = 1.0
            for w, v in zip(words, combo):
                weight *= _weight(d, w, v)
            rows.append((text, cmd.command_id, text == cmd.text, weight))

    if cap is not None and cap < len(rows):
        n_orig = len(commands)
        if cap < n_orig:
            raise ValueError(f"cap {cap} is smaller than the {n_orig} original commands")
        extras = sorted(
            (i for i, r in enumerate(rows) if not r[2]),
            key=lambda i: (-rows[i][3], i),
        )
        keep = {i for i, r in enumerate(rows) if r[2]} | set(extras[: cap - n_orig])
        rows = [r for i, r in enumerate(rows) if i in keep]

    return CandidateSet(commands, [Candidate(i, t, c, o) for i, (t, c, o, _) in enumerate(rows)])

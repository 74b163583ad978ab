"""Seeded posteriorgram simulator standing in for a small CTC acoustic model.

Words are first swapped for a rendering drawn from a confusion table, so
errors are consistent at the word level the way a weak acoustic model's
are. The rendered text is then laid out frame by frame.
"""
import json
import os
from dataclasses import dataclass

import numpy as np

from .ctc import DEFAULT_ALPHABET, Posteriorgram, write_posteriorgram
from .prondict import normalize_words

DEFAULT_COMMANDS = ["play music", "stop music", "pause music", "next song", "previous song"]

DEFAULT_CONFUSIONS = {
    "play": {"play": 0.6, "pla": 0.1, "ply": 0.07, "blay": 0.06, "plai": 0.05, "pley": 0.05, "plae": 0.04, "plei": 0.03},
    "music": {"music": 0.6, "mesic": 0.1, "musik": 0.08, "musec": 0.06, "mosic": 0.05, "muzic": 0.04, "misic": 0.04, "musi": 0.03},
    "stop": {"stop": 0.6, "stap": 0.12, "stup": 0.08, "stob": 0.06, "sop": 0.06, "stopt": 0.04, "stahp": 0.04},
    "pause": {"pause": 0.45, "pose": 0.15, "pay": 0.1, "pase": 0.07, "porse": 0.06, "pas": 0.06, "paws": 0.05, "poz": 0.06},
    "next": {"next": 0.6, "nex": 0.12, "lext": 0.06, "necst": 0.06, "neks": 0.06, "nest": 0.05, "mext": 0.05},
    "song": {"song": 0.6, "son": 0.12, "sung": 0.08, "sang": 0.06, "sog": 0.05, "zong": 0.05, "shong": 0.04},
    "previous": {"previous": 0.55, "previs": 0.12, "preveous": 0.07, "previus": 0.07, "privious": 0.06, "previse": 0.06, "prevus": 0.07},
}

# Non-command speech, some of it acoustically close to command variants.
DEFAULT_OOD_TEXTS = [
    "the weather is nice today", "call my mother", "turn up the volume", "what time is it",
    "open the door", "set an alarm for seven", "read my messages", "next week maybe",
    "music is my life", "stop right there", "play it again", "pause for a moment",
    "a long song", "previous owner", "plea music", "post music", "pass magic",
    "nest song", "previews son", "stab music", "sing song", "ply wood", "text son",
    "plus music", "pose for the camera", "musical chairs", "stopwatch", "the next one",
    "playlist", "post office", "pausing", "songbird", "prevail",
]

FILLER_WORDS = (
    "the a and to of in is it you that he was for on are with as his they be at one have this "
    "from or had by word but what some we can out other were all there when up use your how said "
    "an each she which do their time if will way about many then them write would like so these her"
).split()


@dataclass(frozen=True)
class SimConfig:
    frames_per_char: int = 3
    blank_insert_prob: float = 0.2
    peak_prob: float = 0.85
    noise_temperature: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.frames_per_char < 1:
            raise ValueError("frames_per_char must be >= 1")
        if not 0 <= self.blank_insert_prob <= 1:
            raise ValueError("blank_insert_prob must lie in [0, 1]")
        if not 0 < self.peak_prob <= 1:
            raise ValueError("peak_prob must lie in (0, 1]")
        if self.noise_temperature < 0:
            raise ValueError("noise_temperature must be >= 0")


class ConfusionTable:
    """word -> [(rendering, probability), ...]; unknown words render as themselves."""

    def __init__(self, table=None, alphabet=DEFAULT_ALPHABET):
        self.table = {}
        for word, dist in (table or {}).items():
            items = list(dist.items()) if isinstance(dist, dict) else [tuple(x) for x in dist]
            total = sum(p for _, p in items)
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"probabilities for {word!r} sum to {total}")
            for text, _ in items:
                if not alphabet.is_valid(text) or " " in text:
                    raise ValueError(f"invalid rendering {text!r} for {word!r}")
            self.table[word] = ([t for t, _ in items], np.array([p for _, p in items]))

    def sample(self, word, rng):
        entry = self.table.get(word)
        if entry is None:
            return word
        texts, probs = entry
        return texts[rng.choice(len(texts), p=probs)]

    def to_json(self):
        return {w: dict(zip(t, p.tolist())) for w, (t, p) in self.table.items()}

    @classmethod
    def load(cls, path, alphabet=DEFAULT_ALPHABET):
        with open(path) as fh:
            return cls(json.load(fh), alphabet)


def sample_rendering(transcript, table, rng):
    return " ".join(table.sample(w, rng) for w in normalize_words(transcript))


def synthesize(text, cfg, rng, alphabet=DEFAULT_ALPHABET, utterance_id=""):
    """Lay ``text`` out as frames whose greedy decoding is ``text`` when ``peak_prob > 0.5``."""
    blank = alphabet.blank_index
    path = []
    prev = None
    if rng.random() < cfg.blank_insert_prob:
        path.append(blank)
    for ch in text:
        idx = alphabet.index(ch)
        if idx == prev or (prev is not None and rng.random() < cfg.blank_insert_prob):
            path.append(blank)
        path.extend([idx] * cfg.frames_per_char)
        prev = idx
    if rng.random() < cfg.blank_insert_prob:
        path.append(blank)
    path = np.array(path or [blank])

    T, V = path.size, alphabet.size
    logits = cfg.noise_temperature * rng.standard_normal((T, V))
    logits[np.arange(T), path] = -np.inf
    spread = np.exp(logits - logits.max(axis=1, keepdims=True))
    spread /= spread.sum(axis=1, keepdims=True)
    frames = (1.0 - cfg.peak_prob) * spread
    frames[np.arange(T), path] = cfg.peak_prob
    return Posteriorgram(frames, alphabet, utterance_id)


def render_utterance(transcript, table, cfg, rng=None, alphabet=DEFAULT_ALPHABET, utterance_id=""):
    """Sample a rendering of ``transcript`` and synthesize its posteriorgram."""
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    rendered = sample_rendering(transcript, table, rng)
    return synthesize(rendered, cfg, rng, alphabet, utterance_id)


SPLITS = ("train", "validation", "test")
_STREAMS = {"general": 0, "in_domain": 1, "ood": 2, "assign": 3}


def _rng(seed, stream, index=0):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAMS[stream], index)))


def general_sentences(vocab, n, seed, min_words=3, max_words=6, command_share=0.5, command_words=()):
    """Random word strings for dictionary building; ``command_share`` of tokens come from ``command_words``."""
    rng = _rng(seed, "general")
    command_words = list(command_words)
    out = []
    for _ in range(n):
        words = []
        for _ in range(rng.integers(min_words, max_words + 1)):
            pick = command_words if command_words and rng.random() < command_share else vocab
            words.append(pick[rng.integers(len(pick))])
        out.append(" ".join(words))
    return out


def _write_split(out_dir, name, records):
    path = os.path.join(out_dir, f"{name}.jsonl")
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def make_benchmark(commands, table, cfg, sizes, ood_texts, out_dir, n_ood=1000, general_size=2000,
                   alphabet=DEFAULT_ALPHABET):
    """Write train/validation/test/ood (and a general dictionary corpus) under ``out_dir``.

    ``sizes`` gives utterances per command for each of train, validation and
    test. Returns a dict split -> manifest path.
    """
    if len(sizes) != 3 or min(sizes) < 1:
        raise ValueError("sizes must give three positive per-command counts")
    pg_dir = os.path.join(out_dir, "pgrm")
    os.makedirs(pg_dir, exist_ok=True)
    seed = cfg.rng_seed

    def emit(uid, text, rng):
        pg = render_utterance(text, table, cfg, rng, alphabet, uid)
        rel = os.path.join("pgrm", f"{uid}.pgrm")
        try:
            write_posteriorgram(os.path.join(out_dir, rel), pg)
        except OSError as exc:
            raise OSError(f"cannot write posteriorgram {os.path.join(out_dir, rel)}: {exc}") from exc
        return rel

    manifests = {}
    vocab = sorted(set(FILLER_WORDS))
    command_words = sorted({w for c in commands for w in c.text.split()})
    records = []
    for i, text in enumerate(general_sentences(vocab, general_size, seed, command_words=command_words)):
        uid = f"gen{i:06d}"
        records.append({"utterance_id": uid, "transcript": text,
                        "posteriorgram_path": emit(uid, text, _rng(seed, "general", i + 1)), "split": "general"})
    manifests["general"] = _write_split(out_dir, "general", records)

    by_split = {s: [] for s in SPLITS}
    assign = _rng(seed, "assign")
    counter = 0
    for cmd in commands:
        labels = np.repeat(np.arange(3), sizes)
        assign.shuffle(labels)
        for n, split_no in enumerate(labels):
            uid = f"cmd{cmd.command_id}_{n:05d}"
            rel = emit(uid, cmd.text, _rng(seed, "in_domain", counter))
            counter += 1
            by_split[SPLITS[split_no]].append({
                "utterance_id": uid, "transcript": cmd.text, "command_id": cmd.command_id,
                "posteriorgram_path": rel, "split": SPLITS[split_no],
            })
    for s in SPLITS:
        manifests[s] = _write_split(out_dir, s, by_split[s])

    ood_pick = _rng(seed, "ood")
    records = []
    for i in range(n_ood):
        text = ood_texts[ood_pick.integers(len(ood_texts))]
        uid = f"ood{i:05d}"
        records.append({"utterance_id": uid, "transcript": text,
                        "posteriorgram_path": emit(uid, text, _rng(seed, "ood", i + 1)), "split": "ood"})
    manifests["ood"] = _write_split(out_dir, "ood", records)
    return manifests

"""Grapheme posteriorgrams, CTC greedy decoding and forward scoring."""
import json
import string
import struct
import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._backend import kernels

PGRM_MAGIC = b"PGRM"
PGRM_VERSION = 1
_PGRM_HEADER = struct.Struct("<4sIII")

# Empty squash result. Never a valid label sequence.
EMPTY = ""


class AlphabetError(ValueError):
    pass


class PosteriorgramError(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """Grapheme table with the CTC blank inserted at ``blank_index``.

    Symbol indices run over ``0 .. size - 1``; the blank occupies one of them
    and every other index maps to a grapheme character.
    """

    graphemes: str = " '" + string.ascii_lowercase
    blank_index: int = 0
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.graphemes)) != len(self.graphemes):
            raise AlphabetError("graphemes must be unique")
        if any(len(ch) != 1 for ch in self.graphemes):
            raise AlphabetError("graphemes must be single characters")
        if not 0 <= self.blank_index <= len(self.graphemes):
            raise AlphabetError(f"blank_index {self.blank_index} outside the table")
        if self.size < 2:
            raise AlphabetError("alphabet needs at least one grapheme and the blank")
        lookup = {}
        for i, ch in enumerate(self.graphemes):
            lookup[ch] = i if i < self.blank_index else i + 1
        object.__setattr__(self, "_lookup", lookup)

    @property
    def size(self):
        return len(self.graphemes) + 1

    def index(self, ch):
        try:
            return self._lookup[ch]
        except KeyError:
            raise AlphabetError(f"character {ch!r} is not in the alphabet") from None

    def symbol(self, i):
        if not 0 <= i < self.size:
            raise AlphabetError(f"symbol index {i} outside 0..{self.size - 1}")
        if i == self.blank_index:
            raise AlphabetError("the blank has no grapheme")
        return self.graphemes[i if i < self.blank_index else i - 1]

    def encode(self, text):
        """Label indices for ``text``; raises on empty text or unknown characters."""
        if not text:
            raise AlphabetError("label sequence must be non-empty")
        return np.array([self.index(ch) for ch in text], dtype=np.int64)

    def is_valid(self, text):
        return bool(text) and all(ch in self._lookup for ch in text)

    def to_json(self):
        return {"graphemes": self.graphemes, "blank_index": self.blank_index}

    @classmethod
    def from_json(cls, obj):
        return cls(graphemes=obj["graphemes"], blank_index=int(obj["blank_index"]))


DEFAULT_ALPHABET = Alphabet()


@dataclass(frozen=True, eq=False)
class Posteriorgram:
    """Per-frame symbol distribution (T x V) for one utterance."""

    frames: np.ndarray
    alphabet: Alphabet = DEFAULT_ALPHABET
    utterance_id: str = ""

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        self.validate()

    def validate(self, tol=1e-6):
        f = self.frames
        if f.ndim != 2 or f.shape[0] < 1:
            raise PosteriorgramError(f"{self.utterance_id}: expected T x V with T >= 1, got {f.shape}")
        if f.shape[1] != self.alphabet.size:
            raise PosteriorgramError(
                f"{self.utterance_id}: {f.shape[1]} columns for an alphabet of size {self.alphabet.size}"
            )
        if not np.all(np.isfinite(f)) or f.min() < 0.0 or f.max() > 1.0:
            raise PosteriorgramError(f"{self.utterance_id}: entries must lie in [0, 1]")
        err = np.abs(f.sum(axis=1) - 1.0).max()
        if err > tol:
            raise PosteriorgramError(f"{self.utterance_id}: row sums deviate from 1 by {err:.3g}")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @cached_property
    def log_frames(self):
        with np.errstate(divide="ignore"):
            out = np.log(self.frames)
        out.setflags(write=False)
        return out


def squash(raw, alphabet=DEFAULT_ALPHABET):
    """Collapse runs of identical indices, then drop blanks.

    Returns the decoded string, or ``EMPTY`` when nothing but blanks remain.
    """
    out = []
    prev = None
    for i in raw:
        i = int(i)
        if not 0 <= i < alphabet.size:
            raise AlphabetError(f"symbol index {i} outside 0..{alphabet.size - 1}")
        if i != prev and i != alphabet.blank_index:
            out.append(alphabet.symbol(i))
        prev = i
    return "".join(out)


def greedy_decode(p):
    # np.argmax picks the first maximum, i.e. the lowest symbol index on ties
    return squash(np.argmax(p.frames, axis=1), p.alphabet)


class _CallCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.value = 0

    def add(self, n=1):
        with self._lock:
            self.value += n


scorer_calls = _CallCounter()


def ctc_forward_logprob(p, g):
    """log P_CTC(g | p): log of the summed probability of all frame paths squashing to ``g``."""
    label = p.alphabet.encode(g)
    scorer_calls.add()
    return float(kernels.ctc_logprob(p.log_frames, label, p.alphabet.blank_index))


def encode_many(texts, alphabet):
    """Flatten label sequences into ``(labels, offsets)`` for the batched kernel."""
    encoded = [alphabet.encode(t) for t in texts]
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(e) for e in encoded])
    flat = np.concatenate(encoded) if encoded else np.zeros(0, dtype=np.int64)
    return flat, offsets


def ctc_forward_logprob_many(p, labels, offsets):
    """Score pre-encoded label sequences against one posteriorgram."""
    scorer_calls.add(len(offsets) - 1)
    return kernels.ctc_logprob_many(p.log_frames, labels, offsets, p.alphabet.blank_index)


# -- file formats -------------------------------------------------------------


def write_posteriorgram(path, p):
    T, V = p.frames.shape
    with open(path, "wb") as fh:
        fh.write(_PGRM_HEADER.pack(PGRM_MAGIC, PGRM_VERSION, T, V))
        fh.write(p.frames.astype("<f4").tobytes())


def read_posteriorgram(path, alphabet=DEFAULT_ALPHABET, utterance_id=""):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _PGRM_HEADER.size:
        raise PosteriorgramError(f"{path}: truncated header")
    magic, version, T, V = _PGRM_HEADER.unpack_from(data)
    if magic != PGRM_MAGIC:
        raise PosteriorgramError(f"{path}: bad magic {magic!r}")
    if version != PGRM_VERSION:
        raise PosteriorgramError(f"{path}: unsupported version {version}")
    body = data[_PGRM_HEADER.size:]
    if len(body) != 4 * T * V:
        raise PosteriorgramError(f"{path}: expected {T}x{V} floats, got {len(body)} bytes")
    frames = np.frombuffer(body, dtype="<f4").reshape(T, V).astype(np.float64)
    return Posteriorgram(frames, alphabet, utterance_id)


def posteriorgram_to_json(p):
    return {
        "utterance_id": p.utterance_id,
        "alphabet": p.alphabet.to_json(),
        "frames": p.frames.tolist(),
    }


def posteriorgram_from_json(obj):
    return Posteriorgram(
        np.asarray(obj["frames"], dtype=np.float64),
        Alphabet.from_json(obj["alphabet"]),
        obj.get("utterance_id", ""),
    )


def load_posteriorgram(path, alphabet=DEFAULT_ALPHABET, utterance_id=""):
    """Read either the binary container or the JSON debug form."""
    if str(path).endswith(".json"):
        with open(path) as fh:
            p = posteriorgram_from_json(json.load(fh))
        if utterance_id and not p.utterance_id:
            p = Posteriorgram(p.frames, p.alphabet, utterance_id)
        return p
    return read_posteriorgram(path, alphabet, utterance_id)

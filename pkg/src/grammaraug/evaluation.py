"""Precomputed CTC score matrix and fast grammar evaluation.

Every (candidate, utterance) score is computed once; thresholds, decoding and
error rates for any grammar subset are then derived from the matrix alone.
"""
import json
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ._backend import kernels
from .candgen import CandidateSet
from .ctc import DEFAULT_ALPHABET, ctc_forward_logprob_many, encode_many, load_posteriorgram

SCMX_MAGIC = b"SCMX"
SCMX_VERSION = 1
_SCMX_HEADER = struct.Struct("<4sIII")

REJECT = -1  # decode outcome for "out of domain"


class ThresholdWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Column:
    utterance_id: str
    in_domain: bool
    target: int = -1  # command id, -1 for OOD
    split: str = "ood"


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    source: object  # Posteriorgram, path, or zero-arg loader
    in_domain: bool
    target: int = -1
    split: str = "ood"


@dataclass(frozen=True)
class EvalResult:
    tau: float
    far: float
    mdr: float
    mcr: float
    objective: float
    n_in_domain: int
    n_ood: int
    n_rejected: int
    n_misclassified: int
    n_false_alarms: int

    @property
    def success(self):
        return (self.n_in_domain - self.n_rejected - self.n_misclassified) / self.n_in_domain

    def to_json(self):
        out = asdict(self)
        out["tau"] = None if self.tau == -np.inf else self.tau
        out["success"] = self.success
        return out


class ScoreMatrix:
    """log P_CTC(candidate | utterance) for every candidate row and utterance column."""

    def __init__(self, scores, columns, candidates):
        scores = np.ascontiguousarray(scores, dtype=np.float64)
        if scores.shape != (len(candidates), len(columns)):
            raise ValueError(f"score grid {scores.shape} does not match {len(candidates)} x {len(columns)}")
        if np.any(np.isnan(scores)) or np.any(scores > 0):
            raise ValueError("scores must be log-probabilities (<= 0 or -inf)")
        scores.setflags(write=False)
        self.scores = scores
        self.columns = list(columns)
        self.candidates = candidates

    @property
    def shape(self):
        return self.scores.shape

    def column_indices(self, split=None, in_domain=True):
        return np.array(
            [
                j
                for j, c in enumerate(self.columns)
                if c.in_domain == in_domain and (split is None or not in_domain or c.split == split)
            ],
            dtype=np.int64,
        )

    def originals_mask(self):
        mask = np.zeros(len(self.candidates), dtype=bool)
        mask[self.candidates.original_indices] = True
        return mask

    def all_mask(self):
        return np.ones(len(self.candidates), dtype=bool)

    def save(self, path):
        R, N = self.scores.shape
        with open(path, "wb") as fh:
            fh.write(_SCMX_HEADER.pack(SCMX_MAGIC, SCMX_VERSION, R, N))
            fh.write(self.scores.astype("<f8").tobytes())
        meta = {
            "columns": [asdict(c) for c in self.columns],
            **self.candidates.to_json(),
        }
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        magic, version, R, N = _SCMX_HEADER.unpack_from(data)
        if magic != SCMX_MAGIC or version != SCMX_VERSION:
            raise ValueError(f"{path}: not a version-{SCMX_VERSION} score matrix")
        body = data[_SCMX_HEADER.size:]
        if len(body) != 8 * R * N:
            raise ValueError(f"{path}: expected {R}x{N} doubles, got {len(body)} bytes")
        scores = np.frombuffer(body, dtype="<f8").reshape(R, N).astype(np.float64)
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        columns = [Column(**c) for c in meta["columns"]]
        return cls(scores, columns, CandidateSet.from_json(meta))


def precompute_scores(candidates, utterances, alphabet=DEFAULT_ALPHABET, workers=1):
    """Fill the score matrix, one column per utterance."""
    labels, offsets = encode_many(candidates.texts, alphabet)
    utterances = list(utterances)
    scores = np.empty((len(candidates), len(utterances)))

    def fill(j):
        u = utterances[j]
        src = u.source
        try:
            if callable(src):
                pg = src()
            elif isinstance(src, (str, bytes)) or hasattr(src, "__fspath__"):
                pg = load_posteriorgram(src, alphabet, u.utterance_id)
            else:
                pg = src
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"missing posteriorgram for utterance {u.utterance_id!r}: {exc}") from exc
        if pg is None:
            raise ValueError(f"missing posteriorgram for utterance {u.utterance_id!r}")
        scores[:, j] = ctc_forward_logprob_many(pg, labels, offsets)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, range(len(utterances))))
    else:
        for j in range(len(utterances)):
            fill(j)
    columns = [Column(u.utterance_id, u.in_domain, u.target, u.split) for u in utterances]
    return ScoreMatrix(scores, columns, candidates)


def allowed_false_alarms(alpha, n_ood):
    """Largest count e with e / n_ood < alpha."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    e = max(int(np.ceil(alpha * n_ood)) - 1, 0)
    while (e + 1) / n_ood < alpha:
        e += 1
    while e > 0 and e / n_ood >= alpha:
        e -= 1
    return e


def _rows(mask, originals=None):
    mask = np.asarray(mask, dtype=bool)
    if originals is not None and not np.all(mask[originals]):
        raise ValueError("a grammar selection must keep every original command")
    return np.flatnonzero(mask).astype(np.int64)


class Evaluator:
    """Evaluates grammar masks against one in-domain split plus the OOD set.

    ``calls`` counts :meth:`evaluate` invocations; searches report it as
    their evaluation budget.
    """

    def __init__(self, matrix, split=None, alpha=0.001, beta=1.0):
        self.matrix = matrix
        self.alpha = alpha
        self.beta = beta
        self.split = split
        in_cols = matrix.column_indices(split, in_domain=True)
        ood_cols = matrix.column_indices(in_domain=False)
        if in_cols.size == 0:
            raise ValueError(f"no in-domain utterances for split {split!r}")
        self.in_scores = np.ascontiguousarray(matrix.scores[:, in_cols])
        self.ood_scores = np.ascontiguousarray(matrix.scores[:, ood_cols])
        self.targets = np.array([matrix.columns[j].target for j in in_cols], dtype=np.int64)
        self.row_cmd = np.array(matrix.candidates.command_ids, dtype=np.int64)
        self.n_cmd = len(matrix.candidates.commands)
        self.n_in = in_cols.size
        self.n_ood = ood_cols.size
        self.n_allowed = allowed_false_alarms(alpha, self.n_ood) if self.n_ood else 0
        self.originals = np.array(matrix.candidates.original_indices, dtype=np.int64)
        self.calls = 0
        if self.n_ood and alpha * self.n_ood < 1:
            warnings.warn(
                f"alpha * |OOD| = {alpha * self.n_ood:.3g} < 1: threshold pinned to the top OOD score",
                ThresholdWarning,
                stacklevel=2,
            )

    @property
    def size(self):
        return self.row_cmd.size

    def originals_mask(self):
        return self.matrix.originals_mask()

    def threshold(self, mask):
        rows = _rows(mask, self.originals)
        if not self.n_ood:
            return -np.inf
        om = kernels.ood_max(self.ood_scores, rows)
        return float(kernels.threshold_from_max(om, self.n_allowed))

    def decode(self, mask, tau=None):
        rows = _rows(mask, self.originals)
        if tau is None:
            tau = self.threshold(mask)
        return kernels.decode_columns(self.in_scores, rows, self.row_cmd, self.n_cmd, tau)

    def evaluate(self, mask, count=True):
        rows = _rows(mask, self.originals)
        self.calls += count
        tau, n_far, n_phi, n_wrong = kernels.eval_counts(
            self.in_scores, self.ood_scores, rows, self.row_cmd, self.targets, self.n_cmd, self.n_allowed
        )
        n = self.n_in
        return EvalResult(
            tau=float(tau),
            far=n_far / self.n_ood if self.n_ood else 0.0,
            mdr=n_phi / n,
            mcr=n_wrong / n,
            # counts first so equal error totals give bit-identical objectives
            objective=(n_wrong + self.beta * n_phi) / n,
            n_in_domain=n,
            n_ood=self.n_ood,
            n_rejected=int(n_phi),
            n_misclassified=int(n_wrong),
            n_false_alarms=int(n_far),
        )


def calibrate_threshold(m, sel, alpha):
    """Smallest attained OOD max-score whose strict exceedance rate stays below ``alpha``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThresholdWarning)
        ev = Evaluator(m, None, alpha)
    if ev.n_ood and alpha * ev.n_ood < 1:
        warnings.warn("threshold degenerates to the maximum OOD score", ThresholdWarning, stacklevel=2)
    return ev.threshold(sel)


def decode(m, sel, tau, column):
    """Decoded command id for one matrix column, or ``REJECT``."""
    rows = _rows(sel, m.candidates.original_indices)
    col = np.ascontiguousarray(m.scores[:, [column]])
    row_cmd = np.array(m.candidates.command_ids, dtype=np.int64)
    return int(kernels.decode_columns(col, rows, row_cmd, len(m.candidates.commands), tau)[0])


def evaluate(m, sel, alpha=0.001, beta=1.0, split=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThresholdWarning)
        return Evaluator(m, split, alpha, beta).evaluate(sel)


def mask_to_bits(mask):
    return "".join("1" if b else "0" for b in np.asarray(mask, dtype=bool))


def parse_mask(text, size):
    """Parse a bitstring (char i = candidate i) or ``0x`` hex integer (bit i = candidate i)."""
    text = text.strip()
    if text.lower().startswith("0x"):
        value = int(text, 16)
        if value >> size:
            raise ValueError(f"mask {text} has bits beyond {size} candidates")
        return np.array([(value >> i) & 1 for i in range(size)], dtype=bool)
    if len(text) != size or set(text) - {"0", "1"}:
        raise ValueError(f"expected a {size}-character bitstring")
    return np.array([ch == "1" for ch in text], dtype=bool)


def mask_to_int(mask):
    return sum(1 << int(i) for i in np.flatnonzero(mask))

"""Automatic grammar augmentation for small-footprint CTC voice command recognition."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .align import align_words
from .candgen import CandidateSet, CommandSet, generate_candidates
from .ctc import Alphabet, Posteriorgram, ctc_forward_logprob, greedy_decode, squash
from .evaluation import Evaluator, EvalResult, ScoreMatrix, calibrate_threshold, decode, evaluate, precompute_scores
from .prondict import PronDictionary, build_dictionary, coverage_k, top_k_variants
from .search import (
    SearchConfig,
    beam_search,
    cem_search,
    exhaustive_search,
    greedy_search,
    greedy_search_refined,
)

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grammaraug.ctc import (
    EMPTY,
    Alphabet,
    AlphabetError,
    Posteriorgram,
    PosteriorgramError,
    ctc_forward_logprob,
    greedy_decode,
    load_posteriorgram,
    posteriorgram_to_json,
    read_posteriorgram,
    squash,
    write_posteriorgram,
)
from grammaraug.sim import ConfusionTable, SimConfig, render_utterance

from helpers import brute_ctc_prob, random_posteriorgram

ABC = Alphabet("abc", blank_index=0)


def onehot(alphabet, symbols):
    frames = np.zeros((len(symbols), alphabet.size))
    for t, s in enumerate(symbols):
        frames[t, alphabet.blank_index if s == "-" else alphabet.index(s)] = 1.0
    return Posteriorgram(frames, alphabet)


class TestAlphabet:
    def test_blank_shifts_indices(self):
        a = Alphabet("xy", blank_index=1)
        assert a.size == 3
        assert [a.index("x"), a.index("y")] == [0, 2]
        assert a.symbol(2) == "y"
        with pytest.raises(AlphabetError):
            a.symbol(1)

    def test_rejects_duplicates_and_bad_blank(self):
        with pytest.raises(AlphabetError):
            Alphabet("aa")
        with pytest.raises(AlphabetError):
            Alphabet("ab", blank_index=5)

    def test_default_covers_letters_space_apostrophe(self):
        a = Alphabet()
        assert a.is_valid("don't stop")
        assert not a.is_valid("Stop")


class TestSquash:
    def test_collapse_and_blank_removal(self):
        idx = [ABC.index(c) if c != "-" else 0 for c in "cc-aab"]
        assert squash(idx, ABC) == "cab"

    def test_all_blank(self):
        assert squash([0, 0, 0], ABC) == EMPTY

    def test_blank_separates_repeats(self):
        a = ABC.index("a")
        assert squash([a, 0, a], ABC) == "aa"

    def test_invalid_index(self):
        with pytest.raises(AlphabetError):
            squash([0, 7], ABC)


class TestGreedyDecode:
    def test_onehot(self):
        a = Alphabet("est")
        assert greedy_decode(onehot(a, "se-t")) == "set"

    def test_ties_go_to_lowest_index(self):
        p = Posteriorgram(np.full((3, 4), 0.25), ABC)
        assert greedy_decode(p) == squash([0, 0, 0], ABC) == EMPTY
        b = Alphabet("abc", blank_index=3)
        assert greedy_decode(Posteriorgram(np.full((3, 4), 0.25), b)) == "a"

    def test_planted_confusion(self):
        table = ConfusionTable({"pause": {"pose": 1.0}})
        p = render_utterance("pause", table, SimConfig(rng_seed=11))
        assert greedy_decode(p) == "pose"

    def test_deterministic(self):
        p = random_posteriorgram(np.random.default_rng(3), 20, 5)
        assert len({greedy_decode(p) for _ in range(5)}) == 1


class TestForward:
    def test_single_forced_alignment(self):
        assert ctc_forward_logprob(onehot(ABC, "a"), "a") == 0.0

    def test_two_uniform_frames(self):
        # oracle first: of the 9 two-frame paths over {blank, a, b}, aa, a-, -a squash to "a"
        alphabet = Alphabet("ab", blank_index=0)
        frames = np.full((2, 3), 1 / 3)
        assert brute_ctc_prob(frames, alphabet, "a") == pytest.approx(3 / 9, abs=1e-15)
        p = Posteriorgram(frames, alphabet)
        assert np.exp(ctc_forward_logprob(p, "a")) == pytest.approx(3 / 9, abs=1e-12)

    def test_too_few_frames(self):
        p = Posteriorgram(np.full((2, 4), 0.25), ABC)
        assert ctc_forward_logprob(p, "aa") == -np.inf  # needs a, blank, a
        assert ctc_forward_logprob(p, "abc") == -np.inf
        assert np.isfinite(ctc_forward_logprob(p, "ab"))

    def test_unknown_character(self):
        with pytest.raises(AlphabetError):
            ctc_forward_logprob(onehot(ABC, "a"), "z")
        with pytest.raises(AlphabetError):
            ctc_forward_logprob(onehot(ABC, "a"), "")

    def test_random_instances_match_enumeration(self, backend):
        rng = np.random.default_rng(1234)
        for _ in range(40):
            T, V = int(rng.integers(1, 7)), int(rng.integers(2, 5))
            p = random_posteriorgram(rng, T, V)
            g = "".join(rng.choice(list(p.alphabet.graphemes), size=int(rng.integers(1, 4))))
            expected = brute_ctc_prob(p.frames, p.alphabet, g)
            assert np.exp(ctc_forward_logprob(p, g)) == pytest.approx(expected, abs=1e-9)

    def test_long_utterance_stays_finite(self, backend):
        rng = np.random.default_rng(0)
        p = random_posteriorgram(rng, 2000, 4)
        lp = ctc_forward_logprob(p, "abcabc")
        assert np.isfinite(lp) and lp < -100

    def test_total_probability_is_one(self):
        # every length-T path squashes to some label sequence or to the empty string
        rng = np.random.default_rng(5)
        for T, V in [(1, 2), (3, 3), (4, 3)]:
            p = random_posteriorgram(rng, T, V)
            graphemes = p.alphabet.graphemes
            total = np.prod(p.frames[:, p.alphabet.blank_index])
            for n in range(1, T + 1):
                for g in itertools.product(graphemes, repeat=n):
                    total += np.exp(ctc_forward_logprob(p, "".join(g)))
            assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 8), L=st.integers(1, 4))
def test_probability_in_unit_interval(seed, T, L):
    rng = np.random.default_rng(seed)
    p = random_posteriorgram(rng, T, 4)
    g = "".join(rng.choice(list(p.alphabet.graphemes), size=L))
    lp = ctc_forward_logprob(p, g)
    assert lp <= 1e-12
    assert 0.0 <= np.exp(lp) <= 1.0


class TestPosteriorgram:
    def test_rejects_bad_rows(self):
        with pytest.raises(PosteriorgramError):
            Posteriorgram(np.full((2, 4), 0.3), ABC)
        with pytest.raises(PosteriorgramError):
            Posteriorgram(np.zeros((0, 4)), ABC)
        with pytest.raises(PosteriorgramError):
            Posteriorgram(np.full((2, 3), 1 / 3), ABC)

    def test_binary_roundtrip(self, tmp_path):
        p = random_posteriorgram(np.random.default_rng(2), 7, 4)
        path = tmp_path / "u.pgrm"
        write_posteriorgram(path, p)
        raw = path.read_bytes()
        assert raw[:4] == b"PGRM"
        assert len(raw) == 16 + 4 * 7 * 4
        q = read_posteriorgram(path, p.alphabet, "u")
        np.testing.assert_allclose(q.frames, p.frames, atol=1e-7)
        assert q.utterance_id == "u"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pgrm"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(PosteriorgramError):
            read_posteriorgram(path)

    def test_json_debug_form(self, tmp_path):
        p = random_posteriorgram(np.random.default_rng(4), 3, 3)
        p = Posteriorgram(p.frames, p.alphabet, "dbg")
        path = tmp_path / "u.json"
        path.write_text(json.dumps(posteriorgram_to_json(p)))
        q = load_posteriorgram(path)
        assert q.alphabet == p.alphabet and q.utterance_id == "dbg"
        np.testing.assert_array_equal(q.frames, p.frames)

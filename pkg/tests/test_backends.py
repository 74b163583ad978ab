import os
import subprocess
import sys

import numpy as np
import pytest

from grammaraug import _backend
from grammaraug.evaluation import Evaluator

from helpers import random_mask, random_matrix

ext = _backend.compiled_kernels
py = _backend.python_kernels
needs_ext = pytest.mark.skipif(ext is None, reason="compiled extension not built")


def _labels(rng, V, blank, n):
    symbols = [s for s in range(V) if s != blank]
    labels = [rng.choice(symbols, size=int(rng.integers(1, 6))) for _ in range(n)]
    offsets = np.concatenate([[0], np.cumsum([len(x) for x in labels])]).astype(np.int64)
    return np.concatenate(labels).astype(np.int64), offsets


@needs_ext
def test_ctc_kernels_agree():
    rng = np.random.default_rng(0)
    for _ in range(50):
        T, V = int(rng.integers(1, 40)), int(rng.integers(2, 8))
        blank = int(rng.integers(V))
        logp = np.log(rng.dirichlet(np.full(V, 0.5), size=T))
        flat, offsets = _labels(rng, V, blank, 8)
        a = py.ctc_logprob_many(logp, flat, offsets, blank)
        b = ext.ctc_logprob_many(logp, flat, offsets, blank)
        assert np.array_equal(np.isinf(a), np.isinf(b))
        fin = np.isfinite(a)
        np.testing.assert_allclose(a[fin], b[fin], rtol=0, atol=1e-12)


@needs_ext
def test_eval_kernels_agree():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m = random_matrix(rng, n_in=40, n_ood=60)
        ev = Evaluator(m, alpha=0.05)
        rows = np.flatnonzero(random_mask(rng, m)).astype(np.int64)
        args = (ev.in_scores, ev.ood_scores, rows, ev.row_cmd, ev.targets, ev.n_cmd, ev.n_allowed)
        assert tuple(py.eval_counts(*args)) == tuple(ext.eval_counts(*args))
        om_p, om_e = py.ood_max(ev.ood_scores, rows), ext.ood_max(ev.ood_scores, rows)
        np.testing.assert_array_equal(om_p, om_e)
        tau = float(py.threshold_from_max(om_p, ev.n_allowed))
        assert tau == float(ext.threshold_from_max(om_e, ev.n_allowed))
        np.testing.assert_array_equal(
            py.decode_columns(ev.in_scores, rows, ev.row_cmd, ev.n_cmd, tau),
            ext.decode_columns(ev.in_scores, rows, ev.row_cmd, ev.n_cmd, tau),
        )


@pytest.mark.parametrize("name", ["python", "cython"])
def test_min_frames(name):
    mod = py if name == "python" else ext
    if mod is None:
        pytest.skip("compiled extension not built")
    assert mod.min_frames(np.array([1, 1, 2], dtype=np.int64)) == 4
    assert mod.min_frames(np.array([3], dtype=np.int64)) == 1


def test_environment_forces_fallback():
    env = {**os.environ, "GRAMMARAUG_BACKEND": "python"}
    out = subprocess.run([sys.executable, "-c", "import grammaraug._backend as b; print(b.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_compiled_is_default():
    env = {k: v for k, v in os.environ.items() if k != "GRAMMARAUG_BACKEND"}
    out = subprocess.run([sys.executable, "-c", "import grammaraug._backend as b; print(b.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"


@pytest.mark.parametrize("name", ["python", "cython"])
def test_empty_inputs(name):
    mod = py if name == "python" else ext
    if mod is None:
        pytest.skip("compiled extension not built")
    empty = np.zeros((3, 0))
    assert mod.ood_max(empty, np.array([0, 1], dtype=np.int64)).shape == (0,)
    assert np.all(mod.ood_max(np.zeros((3, 4)), np.array([], dtype=np.int64)) == -np.inf)
    assert mod.threshold_from_max(np.array([-1.0, -2.0]), 5) == -np.inf

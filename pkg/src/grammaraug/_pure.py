"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled ``_ext`` module. Selected automatically when
the extension is missing, or forced with ``GRAMMARAUG_BACKEND=python``.
"""
import numpy as np

NEG_INF = -np.inf


def min_frames(label):
    """Frames needed to emit ``label``: one per symbol plus a blank between repeats."""
    label = np.asarray(label)
    if label.size == 0:
        return 0
    return int(label.size + np.count_nonzero(label[1:] == label[:-1]))


def ctc_logprob(logp, label, blank):
    """log P_CTC(label | logp) by the forward recursion, all in log domain."""
    label = np.asarray(label, dtype=np.int64)
    T = logp.shape[0]
    L = label.size
    if L == 0 or T < min_frames(label):
        return NEG_INF
    S = 2 * L + 1
    ext = np.full(S, blank, dtype=np.int64)
    ext[1::2] = label
    em = logp[:, ext]
    # skip transition s-2 -> s only onto a label that differs from the previous label
    skip = np.zeros(S, dtype=bool)
    skip[3::2] = label[1:] != label[:-1]

    alpha = np.full(S, NEG_INF)
    alpha[0] = em[0, 0]
    alpha[1] = em[0, 1]
    for t in range(1, T):
        prev = alpha
        alpha = prev.copy()
        alpha[1:] = np.logaddexp(prev[1:], prev[:-1])
        alpha[2:] = np.where(skip[2:], np.logaddexp(alpha[2:], prev[:-2]), alpha[2:])
        alpha += em[t]
    return float(np.logaddexp(alpha[-1], alpha[-2]))


def ctc_logprob_many(logp, labels_flat, offsets, blank):
    n = len(offsets) - 1
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = ctc_logprob(logp, labels_flat[offsets[i]:offsets[i + 1]], blank)
    return out


def ood_max(ood_scores, rows):
    if len(rows) == 0:
        return np.full(ood_scores.shape[1], NEG_INF)
    return ood_scores[rows].max(axis=0)


def threshold_from_max(om, n_allowed):
    """Smallest attained value with at most ``n_allowed`` strict exceedances."""
    k = om.size - 1 - n_allowed
    if k < 0:
        return NEG_INF
    return float(np.partition(om, k)[k])


def decode_columns(in_scores, rows, row_cmd, n_cmd, tau):
    sub = in_scores[rows]
    cmds = row_cmd[rows]
    per_cmd = np.full((n_cmd, in_scores.shape[1]), NEG_INF)
    for c in np.unique(cmds):
        per_cmd[c] = sub[cmds == c].max(axis=0)
    best = per_cmd.max(axis=0)
    decoded = per_cmd.argmax(axis=0).astype(np.int64)
    decoded[best <= tau] = -1
    return decoded


def eval_counts(in_scores, ood_scores, rows, row_cmd, targets, n_cmd, n_allowed):
    """Return ``(tau, n_false_alarm, n_rejected, n_wrong)`` for one selection."""
    om = ood_max(ood_scores, rows)
    tau = threshold_from_max(om, n_allowed) if om.size else NEG_INF
    n_far = int(np.count_nonzero(om > tau))
    decoded = decode_columns(in_scores, rows, row_cmd, n_cmd, tau)
    n_phi = int(np.count_nonzero(decoded < 0))
    n_wrong = int(np.count_nonzero((decoded >= 0) & (decoded != targets)))
    return tau, n_far, n_phi, n_wrong

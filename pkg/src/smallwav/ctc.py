"""CTC loss for training the teacher from scratch.

Forward-backward over the blank-extended target lattice, in log space
and float64 internally.  The backward pass uses the classic identity
d(loss)/d(logit) = softmax(logits) - posterior, wired into the autodiff
tape as a single fused op.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _accumulate, _make

NEG_INF = -np.inf


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def min_frames(targets, blank: int = 0) -> int:
    """Fewest frames that can emit this target sequence."""
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def ctc_loss(logits, targets, blank: int = 0) -> Tensor:
    """Negative log-likelihood of `targets` under all CTC alignments.

    Args:
        logits: Tensor of shape (N, M), pre-softmax frame scores.
        targets: token ids, none equal to blank, all in [0, M).
        blank: id of the CTC blank, 0 by convention.

    Returns:
        A scalar Tensor on the tape of `logits`.
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"ctc_loss: expected (N, M) logits, got {logits.shape}")
    n, m = logits.data.shape
    targets = [int(t) for t in targets]
    if any(t == blank for t in targets):
        raise ValueError("ctc_loss: targets must not contain the blank id")
    if any(not 0 <= t < m for t in targets):
        raise ValueError(f"ctc_loss: target ids must lie in [0, {m})")
    need = min_frames(targets, blank)
    if n < need or n == 0:
        raise ValueError(
            f"ctc_loss: {n} frames cannot emit {len(targets)} targets "
            f"(need at least {max(need, 1)})"
        )

    # Blank-extended label sequence: blank, t1, blank, t2, ..., blank.
    z = np.full(2 * len(targets) + 1, blank, dtype=np.int64)
    z[1::2] = targets
    s = z.shape[0]
    logp = _log_softmax(logits.data.astype(np.float64))
    emit = logp[:, z]  # (N, S): log prob of each lattice state's symbol per frame

    # A diagonal skip into state s is legal when it does not jump over a
    # needed blank: z[s] real and different from z[s-2].
    skip = np.zeros(s, dtype=bool)
    if s > 2:
        skip[2:] = (z[2:] != blank) & (z[2:] != z[:-2])

    alpha = np.full((n, s), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, n):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev))[:s]
        acc = np.logaddexp(stay, step)
        jump = np.concatenate(([NEG_INF, NEG_INF], prev))[:s]
        acc = np.where(skip, np.logaddexp(acc, jump), acc)
        alpha[t] = emit[t] + acc

    tail = alpha[n - 1, s - 1]
    if s > 1:
        tail = np.logaddexp(tail, alpha[n - 1, s - 2])
    log_z = float(tail)
    loss_value = np.asarray(-log_z, dtype=logits.data.dtype)

    def bw(g):
        if not logits.requires_grad:
            return
        # Suffix scores excluding the current frame's emission, so that
        # alpha + beta counts each emission exactly once.
        beta = np.full((n, s), NEG_INF)
        beta[n - 1, s - 1] = 0.0
        if s > 1:
            beta[n - 1, s - 2] = 0.0
        for t in range(n - 2, -1, -1):
            nxt = beta[t + 1] + emit[t + 1]
            stay = nxt
            step = np.concatenate((nxt, [NEG_INF]))[1 : s + 1]
            acc = np.logaddexp(stay, step)
            jump = np.concatenate((nxt, [NEG_INF, NEG_INF]))[2 : s + 2]
            skip_ahead = np.concatenate((skip, [False, False]))[2 : s + 2]
            acc = np.where(skip_ahead, np.logaddexp(acc, jump), acc)
            beta[t] = acc
        with np.errstate(invalid="ignore"):
            gamma = np.exp(alpha + beta - log_z)  # (N, S) posteriors
        gamma[~np.isfinite(gamma)] = 0.0
        posterior = np.zeros((n, m))
        np.add.at(posterior.T, z, gamma.T)
        grad = np.exp(logp) - posterior
        _accumulate(logits, (float(g) * grad).astype(logits.data.dtype))

    return _make(loss_value, (logits,), bw)

"""Shared test oracles.

The gradient checker here is deliberately independent of the library's
backward pass: it only calls forward code and compares against central
finite differences in float64.
"""

import numpy as np

from smallwav.tensor import Tensor, mul, tsum

REL_TOL = 1e-4
ABS_FLOOR = 1e-6
FD_STEP = 1e-4


def close(analytic, numeric, rtol=REL_TOL, floor=ABS_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    err = np.abs(analytic - numeric)
    bound = np.maximum(floor, rtol * np.maximum(np.abs(analytic), np.abs(numeric)))
    return bool(np.all(err < bound))


def _scalarize(forward, arrays, proj, grad_mask):
    tensors = [Tensor(a.copy(), requires_grad=m) for a, m in zip(arrays, grad_mask)]
    out = forward(*tensors)
    loss = tsum(mul(out, proj))
    return loss, tensors


def fd_check(forward, arrays, grad_mask=None, rng=None, h=FD_STEP):
    """Compare backward() grads of `forward` against central differences.

    Args:
        forward: callable taking Tensors, returning a Tensor of any shape.
        arrays: list of float64 ndarrays, one per argument.
        grad_mask: which arguments to differentiate (default: all).
        rng: numpy Generator for the output projection.

    Returns:
        (ok, worst) where worst is the largest elementwise gap found.
    """
    rng = rng or np.random.default_rng(0)
    if grad_mask is None:
        grad_mask = [True] * len(arrays)
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    out_shape = forward(*[Tensor(a) for a in arrays]).shape
    proj = rng.standard_normal(out_shape) if out_shape else np.asarray(1.0)

    loss, tensors = _scalarize(forward, arrays, proj, grad_mask)
    loss.backward()

    ok = True
    worst = 0.0
    for i, (a, wants) in enumerate(zip(arrays, grad_mask)):
        if not wants:
            continue
        analytic = tensors[i].grad
        assert analytic is not None, f"arg {i}: no grad reached a leaf"
        numeric = np.zeros_like(a)
        flat = a.reshape(-1)
        nflat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            hi, _ = _scalarize(forward, arrays, proj, [False] * len(arrays))
            flat[j] = orig - h
            lo, _ = _scalarize(forward, arrays, proj, [False] * len(arrays))
            flat[j] = orig
            nflat[j] = (float(hi.data) - float(lo.data)) / (2.0 * h)
        gap = np.max(np.abs(analytic - numeric)) if flat.size else 0.0
        worst = max(worst, float(gap))
        if not close(analytic, numeric):
            ok = False
    return ok, worst

"""Pure-numpy implementations of the hot recurrent kernels.

Gate convention for the recurrent cell, with W (3H, E), U (3H, H), b (3H,)
stacked as rows [reset; update; candidate]:

    r  = sigmoid(W_r x + U_r h + b_r)
    u  = sigmoid(W_u x + U_u h + b_u)
    c  = tanh(W_c x + U_c (r * h) + b_c)
    h' = (1 - u) * h + u * c

The compiled extension in _kernels.pyx implements the same math with fused
loops; kreply.backend picks whichever is available.  Both operate on
1-D/2-D contiguous arrays of a single dtype and accumulate gradients
in-place into caller-provided buffers.
"""

import numpy as np

COMPILED = False


def gru_cell_forward(x, h, W, U, b):
    """One cell step. Returns (h_new, r, u, c); r/u/c are kept for backward."""
    n = h.shape[0]
    gx = W @ x + b
    gh = U[: 2 * n] @ h
    r = _sigmoid(gx[:n] + gh[:n])
    u = _sigmoid(gx[n : 2 * n] + gh[n : 2 * n])
    c = np.tanh(gx[2 * n :] + U[2 * n :] @ (r * h))
    h_new = (1.0 - u) * h + u * c
    return h_new, r, u, c


def gru_cell_backward(g, x, h, W, U, r, u, c, dx, dh, dW, dU, db):
    """Accumulate gradients of one cell step into dx, dh, dW, dU, db.

    g is the gradient w.r.t. h_new; x, h are the step inputs and r, u, c the
    saved activations from the forward pass.
    """
    n = h.shape[0]
    du = g * (c - h)
    dac = (g * u) * (1.0 - c * c)
    dau = du * u * (1.0 - u)
    drh = U[2 * n :].T @ dac
    dar = (drh * h) * r * (1.0 - r)

    da = np.concatenate([dar, dau, dac])
    dW += np.outer(da, x)
    dU[:n] += np.outer(dar, h)
    dU[n : 2 * n] += np.outer(dau, h)
    dU[2 * n :] += np.outer(dac, r * h)
    db += da
    dx += W.T @ da
    dh += g * (1.0 - u) + drh * r + U[: 2 * n].T @ np.concatenate([dar, dau])


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out

"""Compiled forward/backward passes over a flat parameter vector.

Parameter layout for layer sizes ``s = (d, W, ..., W, q)``: for each affine
map ``l = 0..L`` the weight block ``A`` (``s[l+1] x s[l]``, row-major) is
followed by its shift ``v`` (length ``s[l+1]``). Hidden units compute
``relu(A h - v)``; the output layer computes ``A h + v``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _forward_row(theta, sizes, z, hs, pre):
    # hs[l] holds the input to affine map l; pre[l] its pre-activation
    n_maps = sizes.shape[0] - 1
    for k in range(sizes[0]):
        hs[0, k] = z[k]
    off = 0
    for l in range(n_maps):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        v_off = off + n_out * n_in
        last = l == n_maps - 1
        for j in range(n_out):
            acc = 0.0
            row = off + j * n_in
            for k in range(n_in):
                acc += theta[row + k] * hs[l, k]
            if last:
                pre[l, j] = acc + theta[v_off + j]
            else:
                a = acc - theta[v_off + j]
                pre[l, j] = a
                hs[l + 1, j] = a if a > 0.0 else 0.0
        off = v_off + n_out


@njit(cache=True)
def forward_batch(theta, sizes, Z):
    n = Z.shape[0]
    n_maps = sizes.shape[0] - 1
    q = sizes[n_maps]
    width = 0
    for l in range(sizes.shape[0]):
        if sizes[l] > width:
            width = sizes[l]
    hs = np.zeros((n_maps + 1, width))
    pre = np.zeros((n_maps, width))
    out = np.empty((n, q))
    for i in range(n):
        _forward_row(theta, sizes, Z[i], hs, pre)
        for j in range(q):
            out[i, j] = pre[n_maps - 1, j]
    return out


@njit(cache=True)
def mse(theta, sizes, Z, X, idx):
    """Mean over rows ``idx`` of the squared residual norm, summed in row order."""
    n_maps = sizes.shape[0] - 1
    q = sizes[n_maps]
    width = 0
    for l in range(sizes.shape[0]):
        if sizes[l] > width:
            width = sizes[l]
    hs = np.zeros((n_maps + 1, width))
    pre = np.zeros((n_maps, width))
    total = 0.0
    for t in range(idx.shape[0]):
        i = idx[t]
        _forward_row(theta, sizes, Z[i], hs, pre)
        row = 0.0
        for j in range(q):
            r = X[i, j] - pre[n_maps - 1, j]
            row += r * r
        total += row
    return total / idx.shape[0]


@njit(cache=True)
def loss_grad(theta, sizes, Z, X, idx, grad):
    """Loss over rows ``idx``; writes its gradient into ``grad``."""
    n_maps = sizes.shape[0] - 1
    q = sizes[n_maps]
    width = 0
    for l in range(sizes.shape[0]):
        if sizes[l] > width:
            width = sizes[l]
    hs = np.zeros((n_maps + 1, width))
    pre = np.zeros((n_maps, width))
    g = np.zeros(width)
    g_prev = np.zeros(width)
    offs = np.empty(n_maps, dtype=np.int64)
    off = 0
    for l in range(n_maps):
        offs[l] = off
        off += sizes[l + 1] * sizes[l] + sizes[l + 1]
    for p in range(grad.shape[0]):
        grad[p] = 0.0
    m = idx.shape[0]
    scale = 2.0 / m
    total = 0.0
    for t in range(m):
        i = idx[t]
        _forward_row(theta, sizes, Z[i], hs, pre)
        row = 0.0
        for j in range(q):
            r = pre[n_maps - 1, j] - X[i, j]
            row += r * r
            g[j] = scale * r
        total += row
        for l in range(n_maps - 1, -1, -1):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            a_off = offs[l]
            v_off = a_off + n_out * n_in
            if l == n_maps - 1:
                for j in range(n_out):
                    grad[v_off + j] += g[j]
            else:
                for j in range(n_out):
                    if pre[l, j] <= 0.0:
                        g[j] = 0.0
                    grad[v_off + j] -= g[j]
            for k in range(n_in):
                g_prev[k] = 0.0
            for j in range(n_out):
                gj = g[j]
                if gj == 0.0:
                    continue
                row_off = a_off + j * n_in
                for k in range(n_in):
                    grad[row_off + k] += gj * hs[l, k]
                    g_prev[k] += theta[row_off + k] * gj
            for k in range(n_in):
                g[k] = g_prev[k]
    return total / m


@njit(cache=True)
def run_epoch(theta, sizes, Z, X, order, batch_size, lr, use_adam,
              beta1, beta2, eps, m1, m2, step):
    """One pass over ``order`` in minibatches; returns the updated step count."""
    n = order.shape[0]
    grad = np.zeros(theta.shape[0])
    start = 0
    while start < n:
        stop = min(start + batch_size, n)
        loss_grad(theta, sizes, Z, X, order[start:stop], grad)
        step += 1
        if use_adam:
            c1 = 1.0 - beta1 ** step
            c2 = 1.0 - beta2 ** step
            for p in range(theta.shape[0]):
                gp = grad[p]
                m1[p] = beta1 * m1[p] + (1.0 - beta1) * gp
                m2[p] = beta2 * m2[p] + (1.0 - beta2) * gp * gp
                theta[p] -= lr * (m1[p] / c1) / (np.sqrt(m2[p] / c2) + eps)
        else:
            for p in range(theta.shape[0]):
                theta[p] -= lr * grad[p]
        start = stop
    return step

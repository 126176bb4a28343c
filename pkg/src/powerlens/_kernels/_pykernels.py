"""Pure-Python kernels, used when the compiled extension is unavailable."""
import math

import numpy as np


def best_split(x, y, min_leaf, tol):
    """Best binary split of sorted ``x`` minimizing the summed within-side SSE.

    Returns ``(pos, sse)`` where the left side is ``[0, pos)``; ``pos`` is -1
    when no admissible split exists. Running sums use Welford updates so near
    ties resolve the same way in both backends.
    """
    n = len(x)
    if n < 2 * min_leaf or min_leaf < 1:
        return -1, math.inf
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    suffix = [0.0] * (n + 1)
    mean_r = m2_r = 0.0
    for k in range(n - 1, -1, -1):
        i = n - k
        delta = y[k] - mean_r
        mean_r += delta / i
        m2_r += delta * (y[k] - mean_r)
        suffix[k] = m2_r
    best_pos, best_sse = -1, math.inf
    mean_l = m2_l = 0.0
    for i in range(1, n):
        delta = y[i - 1] - mean_l
        mean_l += delta / i
        m2_l += delta * (y[i - 1] - mean_l)
        if i < min_leaf or n - i < min_leaf or not x[i - 1] < x[i]:
            continue
        sse = m2_l + suffix[i]
        if sse < best_sse - tol:
            best_pos, best_sse = i, sse
    return best_pos, best_sse


def cpu_load_batch(prev_idle, prev_total, cur_idle, cur_total):
    negative = zero = bound = 0
    out = np.empty(len(prev_idle), dtype=np.float64)
    for k in range(len(prev_idle)):
        d_total = float(cur_total[k]) - float(prev_total[k])
        d_idle = float(cur_idle[k]) - float(prev_idle[k])
        if not d_total >= 0:
            negative += 1
            d_total = 0.0
        if not d_idle >= 0:
            negative += 1
            d_idle = 0.0
        if d_total == 0.0:
            zero += 1
            out[k] = 0.0
            continue
        load = (d_total - d_idle) / d_total
        if load > 1.0:
            bound += 1
            load = 1.0
        elif load < 0.0:
            bound += 1
            load = 0.0
        out[k] = load
    return out, negative, zero, bound


def antiderivative(t, v, cumulative, q):
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    lo = np.clip(np.searchsorted(t, q, side="right") - 1, 0, len(t) - 2)
    h = t[lo + 1] - t[lo]
    dt = q - t[lo]
    slope = (v[lo + 1] - v[lo]) / h
    if cumulative:
        return v[lo] + slope * dt
    acc = np.zeros(len(t))
    for j in range(1, len(t)):
        acc[j] = acc[j - 1] + 0.5 * (v[j - 1] + v[j]) * (t[j] - t[j - 1])
    return acc[lo] + v[lo] * dt + 0.5 * slope * dt * dt

"""Independent reference implementations used as test oracles."""

import math

import numpy as np


def brute_dtw(a, b):
    """Minimum cost over every monotone alignment path, enumerated explicitly."""
    n, m = len(a), len(b)
    best = math.inf
    stack = [(0, 0, abs(a[0] - b[0]))]
    while stack:
        i, j, cost = stack.pop()
        if i == n - 1 and j == m - 1:
            best = min(best, cost)
            continue
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < n and nj < m:
                stack.append((ni, nj, cost + abs(a[ni] - b[nj])))
    return best


def reference_zigzag(x, threshold):
    """Reversal automaton written with multiplicative bands instead of ratios.

    Returns a list of (index, +1 for peak / -1 for valley).
    """
    x = [float(v) for v in x]
    trend = 0
    ext = 0
    for i in range(1, len(x)):
        if x[i] >= x[0] * (1 + threshold):
            trend, ext = 1, i
            break
        if x[i] <= x[0] * (1 - threshold):
            trend, ext = -1, i
            break
    pivots = []
    if trend == 0:
        return pivots
    for i in range(ext + 1, len(x)):
        if trend == 1:
            if x[i] > x[ext]:
                ext = i
            elif x[i] <= x[ext] * (1 - threshold):
                pivots.append((ext, 1))
                trend, ext = -1, i
        else:
            if x[i] < x[ext]:
                ext = i
            elif x[i] >= x[ext] * (1 + threshold):
                pivots.append((ext, -1))
                trend, ext = 1, i
    return pivots


def reference_pv_errors(pred, target, threshold, offset=1.0):
    """Peak/valley value errors, pairing each kind in temporal order with arg-extremum fallback."""
    def points(v):
        piv = reference_zigzag(np.asarray(v) + offset, threshold)
        peaks = [i for i, k in piv if k == 1] or [int(np.argmax(v))]
        valleys = [i for i, k in piv if k == -1] or [int(np.argmin(v))]
        return peaks, valleys

    (pp, pv), (tp, tv) = points(pred), points(target)
    errs = [pred[i] - target[j] for i, j in zip(pp, tp)]
    errs += [pred[i] - target[j] for i, j in zip(pv, tv)]
    return np.asarray(errs)


def reference_dm(e1, e2, h):
    """Diebold-Mariano statistic with explicit loops, no numpy reductions."""
    n = len(e1)
    d = [e1[t] ** 2 - e2[t] ** 2 for t in range(n)]
    mean = math.fsum(d) / n
    gammas = []
    for k in range(h):
        gammas.append(math.fsum((d[t] - mean) * (d[t - k] - mean) for t in range(k, n)) / n)
    var = gammas[0] + 2 * math.fsum(gammas[1:])
    stat = mean / math.sqrt(var / n)
    p = 2 * (1 - 0.5 * (1 + math.erf(abs(stat) / math.sqrt(2))))
    return stat, p


def numeric_gradient(f, array, eps=1e-5, indices=None):
    """Central differences of scalar ``f()`` with respect to entries of ``array`` (mutated in place)."""
    flat = array.reshape(-1)
    indices = range(flat.size) if indices is None else indices
    out = {}
    for k in indices:
        orig = flat[k]
        flat[k] = orig + eps
        up = f()
        flat[k] = orig - eps
        down = f()
        flat[k] = orig
        out[k] = (up - down) / (2 * eps)
    return out


def grad_close(analytic, numeric, rel=1e-4, floor=1e-6):
    return abs(analytic - numeric) <= max(floor, rel * max(abs(analytic), abs(numeric)))


def penalty_factors(loss, pred, target, params):
    """Pivot penalty factors per row, or None for losses without them."""
    from driftcast.losses import mpv_factor, spv_factor

    rows = zip(np.atleast_2d(pred), np.atleast_2d(target))
    if loss == "spv":
        return [spv_factor(p, t, params.spv, params.normalize_positions) for p, t in rows]
    if loss == "mpv":
        return [mpv_factor(p, t, params.mpv, params.normalize_positions) for p, t in rows]
    return None


def model_gradient_failures(model, X, Y, loss, params=None, coords=None, rng=None, eps=1e-6):
    """Compare backprop gradients of ``loss(model(X), Y)`` with central differences.

    ``coords`` limits the check to that many random entries per parameter.
    Perturbations that change a pivot penalty factor are skipped, since the
    loss is discontinuous there. Returns ``(failures, n_checked)``.
    """
    from driftcast import autodiff as ad
    from driftcast.losses import LossParams, compute_loss

    params = params or LossParams()
    rng = rng or np.random.default_rng(0)
    ad.current_tape().clear()
    for p in model.parameters():
        p.grad = None
    pred = model.forward(X)
    ad.backward(compute_loss(loss, pred, Y, params))
    base = penalty_factors(loss, pred.data, Y, params)

    def value():
        with ad.no_grad():
            out = model.forward(X)
            return compute_loss(loss, out, Y, params).item(), penalty_factors(loss, out.data, Y, params)

    failures, checked = [], 0
    for name, p in model.named_parameters().items():
        grad = p.grad.reshape(-1).copy()
        flat = p.data.reshape(-1)
        idx = range(flat.size) if coords is None else rng.choice(flat.size, min(coords, flat.size), replace=False)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + eps
            up, f_up = value()
            flat[k] = orig - eps
            down, f_down = value()
            flat[k] = orig
            if f_up != base or f_down != base:
                continue
            num = (up - down) / (2 * eps)
            checked += 1
            if not grad_close(grad[k], num):
                failures.append((name, int(k), float(grad[k]), float(num)))
    return failures, checked

"""Pure-Python kernels; reference semantics for ``_kernels.pyx``.

Both backends consume uniforms in blocks of ``BLOCK`` from a numpy
``Generator`` and perform the same floating-point operations in the same
order, so a fixed seed gives the same realization on either backend.

Simulation kernels return a status flag instead of raising: 0 means
success, 1 means the event cap was exceeded.
"""

import math

import numpy as np

BLOCK = 4096


class UniformStream:
    def __init__(self, rng):
        self.rng = rng
        self.buf = rng.random(BLOCK).tolist()
        self.pos = 0

    def next(self):
        if self.pos == BLOCK:
            self.buf = self.rng.random(BLOCK).tolist()
            self.pos = 0
        v = self.buf[self.pos]
        self.pos += 1
        return v


def _piece_value(k, t, table):
    upto, code, c, a, p, q = table
    kind = code[k]
    if kind == 0:
        return c[k]
    if kind == 1:
        return c[k] / (max(a[k], t) ** p[k])
    return c[k] / (t ** p[k] - q[k])


def decay_value(t, table):
    upto = table[0]
    k = 0
    while t > upto[k]:
        k += 1
    return _piece_value(k, t, table)


def envelope_factor(table):
    """Product of upward jump ratios at the breakpoints (1.0 if none)."""
    upto = table[0]
    f = 1.0
    for k in range(len(upto) - 1):
        lv = _piece_value(k, upto[k], table)
        rv = _piece_value(k + 1, upto[k], table)
        if rv > lv:
            f *= rv / lv
    return f


def _as_table(table):
    upto, code, c, a, p, q = table
    return (
        [float(x) for x in upto],
        [int(x) for x in code],
        [float(x) for x in c],
        [float(x) for x in a],
        [float(x) for x in p],
        [float(x) for x in q],
    )


def _decay_state(S, beta, m, dt):
    for i in range(m):
        Si = S[i]
        bi = beta[i]
        for j in range(m):
            if Si[j] != 0.0:
                Si[j] *= math.exp(-bi[j] * dt)


def thinning_scalar(mu, A, beta, table, seed_t, seed_node, horizon, rng, cap):
    """Ogata thinning for a scalar nonincreasing multiplier.

    The envelope is the current intensity with ``d`` scaled by
    :func:`envelope_factor`, which covers small upward jumps at breakpoints.

    Returns ``(times, nodes, is_seed, status)``.
    """
    m = len(mu)
    mu = [float(x) for x in mu]
    A = [[float(x) for x in row] for row in np.asarray(A)]
    beta = [[float(x) for x in row] for row in np.asarray(beta)]
    table = _as_table(table)
    fac = envelope_factor(table)
    seed_t = [float(x) for x in seed_t]
    seed_node = [int(x) for x in seed_node]
    horizon = float(horizon)
    U = UniformStream(rng)

    S = [[0.0] * m for _ in range(m)]
    times, nodes, flags = [], [], []
    mu_tot = 0.0
    for i in range(m):
        mu_tot += mu[i]
    t = 0.0
    ns = len(seed_t)
    si = 0
    status = 0
    while True:
        d = decay_value(t, table)
        exc = 0.0
        for i in range(m):
            for j in range(m):
                exc += S[i][j]
        lam_bar = mu_tot + d * fac * exc
        nxt = seed_t[si] if si < ns else math.inf
        cand = t - math.log(1.0 - U.next()) / lam_bar if lam_bar > 0.0 else math.inf
        if nxt <= cand:
            if nxt >= horizon:
                break
            _decay_state(S, beta, m, nxt - t)
            t = nxt
            v = seed_node[si]
            times.append(t)
            nodes.append(v)
            flags.append(True)
            for i in range(m):
                S[i][v] += A[i][v]
            si += 1
            if len(times) > cap:
                status = 1
                break
            continue
        if cand >= horizon:
            break
        _decay_state(S, beta, m, cand - t)
        t = cand
        d = decay_value(t, table)
        target = U.next() * lam_bar
        acc = 0.0
        for i in range(m):
            row = 0.0
            for j in range(m):
                row += S[i][j]
            acc += mu[i] + d * row
            if target < acc:
                times.append(t)
                nodes.append(i)
                flags.append(False)
                for k in range(m):
                    S[k][i] += A[k][i]
                break
        if len(times) > cap:
            status = 1
            break
    return (
        np.array(times, dtype=float),
        np.array(nodes, dtype=np.int64),
        np.array(flags, dtype=bool),
        status,
    )


def branching_scalar(mu, A, beta, table, root_t, root_node, horizon, rng, cap):
    """Cluster construction: Poisson immigrants, then offspring generation by generation.

    Each parent at ``tau`` in node ``v`` gets candidate children in node ``i``
    from the rate ``A[i,v] d(tau) exp(-beta[i,v] (t - tau))`` on
    ``[tau, horizon)`` (sampled by inverting its cumulative rate), each kept
    with probability ``d(t) / d(tau)``. ``d(tau)`` is scaled by
    :func:`envelope_factor` in both places so the ratio never exceeds 1.

    Returns ``(times, nodes, parents, n_immigrants, status)``; immigrants
    come first, then the supplied roots, then offspring in creation order.
    """
    m = len(mu)
    mu = [float(x) for x in mu]
    A = [[float(x) for x in row] for row in np.asarray(A)]
    beta = [[float(x) for x in row] for row in np.asarray(beta)]
    table = _as_table(table)
    fac = envelope_factor(table)
    horizon = float(horizon)
    U = UniformStream(rng)

    times, nodes, parents = [], [], []
    status = 0
    for i in range(m):
        if mu[i] > 0.0:
            t = 0.0
            while True:
                t += -math.log(1.0 - U.next()) / mu[i]
                if t >= horizon:
                    break
                times.append(t)
                nodes.append(i)
                parents.append(-1)
    n_imm = len(times)
    for t, v in zip(root_t, root_node):
        times.append(float(t))
        nodes.append(int(v))
        parents.append(-1)
    if len(times) > cap:
        status = 1

    idx = 0
    while status == 0 and idx < len(times):
        tau = times[idx]
        v = nodes[idx]
        dtau = decay_value(tau, table) * fac
        if dtau > 0.0:
            for i in range(m):
                a = A[i][v]
                if a <= 0.0:
                    continue
                b = beta[i][v]
                scale = a * dtau / b
                total = scale * (1.0 - math.exp(-b * (horizon - tau)))
                cum = 0.0
                while True:
                    cum += -math.log(1.0 - U.next())
                    if cum >= total:
                        break
                    tc = tau - math.log(1.0 - cum / scale) / b
                    if U.next() * dtau < decay_value(tc, table) and tc < horizon:
                        times.append(tc)
                        nodes.append(i)
                        parents.append(idx)
                if len(times) > cap:
                    status = 1
                    break
        idx += 1
    return (
        np.array(times, dtype=float),
        np.array(nodes, dtype=np.int64),
        np.array(parents, dtype=np.int64),
        n_imm,
        status,
    )


def excitation_at_events(times, nodes, beta, m):
    """``R[k, v] = sum_{j<k, u_j=v} exp(-beta[u_k, v] (t_k - t_j))``."""
    n = len(times)
    beta = [[float(x) for x in row] for row in np.asarray(beta)]
    times = [float(x) for x in times]
    nodes = [int(x) for x in nodes]
    R = np.zeros((n, m))
    S = [[0.0] * m for _ in range(m)]
    tprev = 0.0
    for k in range(n):
        t = times[k]
        u = nodes[k]
        _decay_state(S, beta, m, t - tprev)
        R[k, :] = S[u]
        for i in range(m):
            S[i][u] += 1.0
        tprev = t
    return R


def picard_sweep(D, m_vals, g, w_first, w_mid, w_last, ratio):
    """One Picard update of the cluster-length fixed point on a grid.

    ``D[a, j]`` approximates the CDF at ``t = t_a``, ``y = j*h``;
    ``g[a, k]`` is ``alpha(t_a + k h) * A``. The integral over
    ``tau in [t, t+y]`` is a product trapezoid rule: the smooth factor is
    interpolated linearly and the exponential kernel integrated exactly,
    giving node weights ``w_first`` (k = 0), ``w_mid[k]`` (interior) and
    ``w_last[k]`` (k = j). ``ratio = h / h_t`` maps an integration step to
    t-grid rows; fractional rows are interpolated linearly and rows past
    the end are clamped. Discretization can push the exponent above 0 by
    O(h^2), so it is capped there (the CDF never exceeds 1).
    """
    nt, ny = D.shape
    acc = np.zeros((nt, ny))
    rows = np.arange(nt)
    for k in range(ny):
        q = rows + k * ratio
        lo = np.floor(q).astype(np.int64)
        w = q - lo
        past = lo >= nt - 1
        lo = np.minimum(lo, nt - 1)
        hi = np.minimum(lo + 1, nt - 1)
        w = np.where(past, 0.0, w)
        cols = ny - k
        Dk = (1.0 - w)[:, None] * D[lo, :cols] + w[:, None] * D[hi, :cols]
        term = Dk * g[:, k][:, None]
        # term[:, c] feeds column j = c + k
        if k == 0:
            acc[:, 1:] += w_first * term[:, 1:]
        else:
            acc[:, k] += w_last[k] * term[:, 0]
            acc[:, k + 1:] += w_mid[k] * term[:, 1:]
    return np.exp(np.minimum(-m_vals[:, None] + acc, 0.0))

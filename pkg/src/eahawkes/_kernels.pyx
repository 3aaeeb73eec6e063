# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Semantics and draw order match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, pow, floor, INFINITY

cnp.import_array()

cdef enum:
    BLOCK = 4096


cdef class UniformStream:
    cdef object rng
    cdef double[::1] buf
    cdef Py_ssize_t pos

    def __init__(self, rng):
        self.rng = rng
        self.buf = rng.random(BLOCK)
        self.pos = 0

    cdef inline double next(self):
        cdef double v
        if self.pos == BLOCK:
            self.buf = self.rng.random(BLOCK)
            self.pos = 0
        v = self.buf[self.pos]
        self.pos += 1
        return v


cdef struct DecayTable:
    Py_ssize_t n
    double *upto
    long long *code
    double *c
    double *a
    double *p
    double *q


cdef inline double piece_value(Py_ssize_t k, double t, DecayTable *tb) nogil:
    if tb.code[k] == 0:
        return tb.c[k]
    if tb.code[k] == 1:
        return tb.c[k] / pow(t if t > tb.a[k] else tb.a[k], tb.p[k])
    return tb.c[k] / (pow(t, tb.p[k]) - tb.q[k])


cdef inline double decay_value(double t, DecayTable *tb) nogil:
    cdef Py_ssize_t k = 0
    while t > tb.upto[k]:
        k += 1
    return piece_value(k, t, tb)


cdef double _envelope_factor(DecayTable *tb) nogil:
    cdef Py_ssize_t k
    cdef double f = 1.0, lv, rv
    for k in range(tb.n - 1):
        lv = piece_value(k, tb.upto[k], tb)
        rv = piece_value(k + 1, tb.upto[k], tb)
        if rv > lv:
            f *= rv / lv
    return f


def envelope_factor(table):
    cdef _TableHolder th = _TableHolder(table)
    return _envelope_factor(&th.tb)


cdef class _TableHolder:
    cdef double[::1] upto, c, a, p, q
    cdef long long[::1] code
    cdef DecayTable tb

    def __init__(self, table):
        upto, code, c, a, p, q = table
        self.upto = np.ascontiguousarray(upto, dtype=np.float64)
        self.code = np.ascontiguousarray(code, dtype=np.int64)
        self.c = np.ascontiguousarray(c, dtype=np.float64)
        self.a = np.ascontiguousarray(a, dtype=np.float64)
        self.p = np.ascontiguousarray(p, dtype=np.float64)
        self.q = np.ascontiguousarray(q, dtype=np.float64)
        self.tb.n = self.upto.shape[0]
        self.tb.upto = &self.upto[0]
        self.tb.code = &self.code[0]
        self.tb.c = &self.c[0]
        self.tb.a = &self.a[0]
        self.tb.p = &self.p[0]
        self.tb.q = &self.q[0]


def decay_values(const double[::1] t, table):
    cdef _TableHolder th = _TableHolder(table)
    cdef Py_ssize_t k, n = t.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    for k in range(n):
        o[k] = decay_value(t[k], &th.tb)
    return out


cdef inline void _decay_state(double[:, ::1] S, const double[:, ::1] beta, Py_ssize_t m, double dt) nogil:
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(m):
            if S[i, j] != 0.0:
                S[i, j] *= exp(-beta[i, j] * dt)


cdef class _Growable:
    """Append-only parallel arrays (time, node, int tag)."""
    cdef public object t_arr, n_arr, g_arr
    cdef double[::1] t
    cdef long long[::1] nd
    cdef long long[::1] g
    cdef public Py_ssize_t size
    cdef Py_ssize_t cap

    def __init__(self, Py_ssize_t cap=1024):
        self.cap = cap
        self.size = 0
        self.t_arr = np.empty(cap)
        self.n_arr = np.empty(cap, dtype=np.int64)
        self.g_arr = np.empty(cap, dtype=np.int64)
        self.t = self.t_arr
        self.nd = self.n_arr
        self.g = self.g_arr

    cdef void push(self, double t, long long node, long long tag):
        if self.size == self.cap:
            self.cap *= 2
            self.t_arr = np.resize(self.t_arr, self.cap)
            self.n_arr = np.resize(self.n_arr, self.cap)
            self.g_arr = np.resize(self.g_arr, self.cap)
            self.t = self.t_arr
            self.nd = self.n_arr
            self.g = self.g_arr
        self.t[self.size] = t
        self.nd[self.size] = node
        self.g[self.size] = tag
        self.size += 1

    def arrays(self):
        return (self.t_arr[:self.size].copy(), self.n_arr[:self.size].copy(), self.g_arr[:self.size].copy())


def thinning_scalar(mu, A, beta, table, seed_t, seed_node, double horizon, rng, Py_ssize_t cap):
    cdef const double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] A_v = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] b_v = np.ascontiguousarray(beta, dtype=np.float64)
    cdef const double[::1] st = np.ascontiguousarray(seed_t, dtype=np.float64)
    cdef const long long[::1] sn = np.ascontiguousarray(seed_node, dtype=np.int64)
    cdef _TableHolder th = _TableHolder(table)
    cdef UniformStream U = UniformStream(rng)
    cdef Py_ssize_t m = mu_v.shape[0]
    cdef double[:, ::1] S = np.zeros((m, m))
    cdef _Growable out = _Growable()
    cdef double mu_tot = 0.0, t = 0.0, d, exc, lam_bar, nxt, cand, target, acc, row
    cdef double fac = _envelope_factor(&th.tb)
    cdef Py_ssize_t i, j, k, ns = st.shape[0], si = 0
    cdef long long v
    cdef int status = 0

    for i in range(m):
        mu_tot += mu_v[i]
    while True:
        d = decay_value(t, &th.tb)
        exc = 0.0
        for i in range(m):
            for j in range(m):
                exc += S[i, j]
        lam_bar = mu_tot + d * fac * exc
        nxt = st[si] if si < ns else INFINITY
        if lam_bar > 0.0:
            cand = t - log(1.0 - U.next()) / lam_bar
        else:
            cand = INFINITY
        if nxt <= cand:
            if nxt >= horizon:
                break
            _decay_state(S, b_v, m, nxt - t)
            t = nxt
            v = sn[si]
            out.push(t, v, 1)
            for i in range(m):
                S[i, v] += A_v[i, v]
            si += 1
            if out.size > cap:
                status = 1
                break
            continue
        if cand >= horizon:
            break
        _decay_state(S, b_v, m, cand - t)
        t = cand
        d = decay_value(t, &th.tb)
        target = U.next() * lam_bar
        acc = 0.0
        for i in range(m):
            row = 0.0
            for j in range(m):
                row += S[i, j]
            acc += mu_v[i] + d * row
            if target < acc:
                out.push(t, i, 0)
                for k in range(m):
                    S[k, i] += A_v[k, i]
                break
        if out.size > cap:
            status = 1
            break
    times, nodes, flags = out.arrays()
    return times, nodes, flags.astype(bool), status


def branching_scalar(mu, A, beta, table, root_t, root_node, double horizon, rng, Py_ssize_t cap):
    cdef const double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] A_v = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] b_v = np.ascontiguousarray(beta, dtype=np.float64)
    cdef const double[::1] rt = np.ascontiguousarray(root_t, dtype=np.float64)
    cdef const long long[::1] rn = np.ascontiguousarray(root_node, dtype=np.int64)
    cdef _TableHolder th = _TableHolder(table)
    cdef UniformStream U = UniformStream(rng)
    cdef Py_ssize_t m = mu_v.shape[0]
    cdef _Growable out = _Growable(max(1024, 2 * rt.shape[0]))
    cdef double t, tau, dtau, a, b, scale, total, cum, tc
    cdef double fac = _envelope_factor(&th.tb)
    cdef Py_ssize_t i, k, idx, n_imm
    cdef long long v
    cdef int status = 0

    for i in range(m):
        if mu_v[i] > 0.0:
            t = 0.0
            while True:
                t += -log(1.0 - U.next()) / mu_v[i]
                if t >= horizon:
                    break
                out.push(t, i, -1)
    n_imm = out.size
    for k in range(rt.shape[0]):
        out.push(rt[k], rn[k], -1)
    if out.size > cap:
        status = 1

    idx = 0
    while status == 0 and idx < out.size:
        tau = out.t[idx]
        v = out.nd[idx]
        dtau = decay_value(tau, &th.tb) * fac
        if dtau > 0.0:
            for i in range(m):
                a = A_v[i, v]
                if a <= 0.0:
                    continue
                b = b_v[i, v]
                scale = a * dtau / b
                total = scale * (1.0 - exp(-b * (horizon - tau)))
                cum = 0.0
                while True:
                    cum += -log(1.0 - U.next())
                    if cum >= total:
                        break
                    tc = tau - log(1.0 - cum / scale) / b
                    if U.next() * dtau < decay_value(tc, &th.tb) and tc < horizon:
                        out.push(tc, i, idx)
                if out.size > cap:
                    status = 1
                    break
        idx += 1
    times, nodes, parents = out.arrays()
    return times, nodes, parents, n_imm, status


def excitation_at_events(times, nodes, beta, Py_ssize_t m):
    cdef const double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef const long long[::1] nv = np.ascontiguousarray(nodes, dtype=np.int64)
    cdef const double[:, ::1] b_v = np.ascontiguousarray(beta, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], k, i, v
    R = np.zeros((n, m))
    cdef double[:, ::1] Rv = R
    cdef double[:, ::1] S = np.zeros((m, m))
    cdef double tprev = 0.0, t
    cdef long long u
    with nogil:
        for k in range(n):
            t = tv[k]
            u = nv[k]
            _decay_state(S, b_v, m, t - tprev)
            for v in range(m):
                Rv[k, v] = S[u, v]
            for i in range(m):
                S[i, u] += 1.0
            tprev = t
    return R


def picard_sweep(D, m_vals, g, double w_first, w_mid, w_last, double ratio):
    cdef const double[:, ::1] Dv = np.ascontiguousarray(D, dtype=np.float64)
    cdef const double[::1] mv = np.ascontiguousarray(m_vals, dtype=np.float64)
    cdef const double[:, ::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[::1] wm = np.ascontiguousarray(w_mid, dtype=np.float64)
    cdef const double[::1] wl = np.ascontiguousarray(w_last, dtype=np.float64)
    cdef Py_ssize_t nt = Dv.shape[0], ny = Dv.shape[1], a, j, k, lo
    out = np.empty((nt, ny))
    cdef double[:, ::1] ov = out
    cdef double acc, q, w, val, ex
    with nogil:
        for a in range(nt):
            ov[a, 0] = exp(-mv[a])
            for j in range(1, ny):
                acc = 0.0
                for k in range(j + 1):
                    q = a + k * ratio
                    lo = <Py_ssize_t> floor(q)
                    if lo >= nt - 1:
                        val = Dv[nt - 1, j - k]
                    else:
                        w = q - lo
                        val = (1.0 - w) * Dv[lo, j - k] + w * Dv[lo + 1, j - k]
                    if k == 0:
                        acc += w_first * val * gv[a, k]
                    elif k == j:
                        acc += wl[k] * val * gv[a, k]
                    else:
                        acc += wm[k] * val * gv[a, k]
                ex = -mv[a] + acc
                ov[a, j] = exp(ex if ex < 0.0 else 0.0)
    return out

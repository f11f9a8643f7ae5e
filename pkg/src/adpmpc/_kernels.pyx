# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures and semantics as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, sqrt, INFINITY

cnp.import_array()

BACKEND = "cython"

cdef enum:
    NT = 3
cdef double BETA3_FLOOR = 1e-6


cdef inline void _tank_rhs(const double* H, double u, const double* p, double* out) noexcept nogil:
    cdef double a = p[0], b = p[1], c = p[2], w_t = p[3], R = p[4]
    cdef double h2m = p[6]
    cdef double u_min = p[14], u_max = p[15], q_max = p[16]
    cdef double uc = u
    if uc < u_min:
        uc = u_min
    elif uc > u_max:
        uc = u_max
    cdef double q = q_max * (uc - u_min) / (u_max - u_min)
    cdef double H1 = H[0], H2 = H[1], H3 = H[2]
    cdef double o1 = p[8] * pow(H1 if H1 > 0.0 else 0.0, p[11])
    cdef double o2 = p[9] * pow(H2 if H2 > 0.0 else 0.0, p[12])
    cdef double o3 = p[10] * pow(H3 if H3 > 0.0 else 0.0, p[13])
    cdef double beta1 = a * w_t
    cdef double beta2 = c * w_t + (H2 / h2m) * b * w_t
    cdef double h3 = H3
    if h3 < BETA3_FLOOR:
        h3 = BETA3_FLOOR
    if h3 > 2.0 * R - BETA3_FLOOR:
        h3 = 2.0 * R - BETA3_FLOOR
    cdef double beta3 = w_t * sqrt(R * R - (R - h3) * (R - h3))
    out[0] = (q - o1) / beta1
    out[1] = (o1 - o2) / beta2
    out[2] = (o2 - o3) / beta3


cdef inline int _tank_step(double* x, double u, const double* p, double dt, int substeps,
                           int method, const double* lo, const double* hi) noexcept nogil:
    cdef double k1[NT]
    cdef double k2[NT]
    cdef double k3[NT]
    cdef double k4[NT]
    cdef double tmp[NT]
    cdef double h = dt / substeps
    cdef int s, i, clamped = 0
    for s in range(substeps):
        if method == 0:
            _tank_rhs(x, u, p, k1)
            for i in range(NT):
                tmp[i] = x[i] + 0.5 * h * k1[i]
            _tank_rhs(tmp, u, p, k2)
            for i in range(NT):
                tmp[i] = x[i] + 0.5 * h * k2[i]
            _tank_rhs(tmp, u, p, k3)
            for i in range(NT):
                tmp[i] = x[i] + h * k3[i]
            _tank_rhs(tmp, u, p, k4)
            for i in range(NT):
                x[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            _tank_rhs(x, u, p, k1)
            for i in range(NT):
                x[i] = x[i] + h * k1[i]
    for i in range(NT):
        if x[i] < lo[i]:
            x[i] = lo[i]
            clamped = 1
        elif x[i] > hi[i]:
            x[i] = hi[i]
            clamped = 1
    return clamped


def tank_step_batch(H, u, p, double dt, int substeps, int method, lo, hi):
    cdef double[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t k = Hv.shape[0], r, i
    out = np.empty((k, NT), dtype=np.float64)
    flags = np.zeros(k, dtype=np.uint8)
    cdef double[:, ::1] ov = out
    cdef unsigned char[::1] fv = flags
    with nogil:
        for r in range(k):
            for i in range(NT):
                ov[r, i] = Hv[r, i]
            fv[r] = _tank_step(&ov[r, 0], uv[r], &pv[0], dt, substeps, method, &lov[0], &hiv[0])
    return out, flags


cdef inline double _quad(const double* P, const double* x, Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0, row
    cdef Py_ssize_t a, b
    for a in range(d):
        row = 0.0
        for b in range(d):
            row += P[a * d + b] * x[b]
        s += x[a] * row
    return s


def quadform_min(P, X):
    cdef double[:, :, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t mu = Pv.shape[0], d = Pv.shape[1], k = Xv.shape[0], r, i, best_i
    cdef double v, best
    vals = np.empty(k, dtype=np.float64)
    idx = np.empty(k, dtype=np.int64)
    cdef double[::1] vv = vals
    cdef cnp.int64_t[::1] iv = idx
    with nogil:
        for r in range(k):
            best = INFINITY
            best_i = 0
            for i in range(mu):
                v = _quad(&Pv[i, 0, 0], &Xv[r, 0], d)
                if v < best:
                    best = v
                    best_i = i
            vv[r] = best
            iv[r] = best_i
    return vals, idx


def adp_scan(Xbar, stage, P, mask):
    cdef double[:, ::1] Xv = np.ascontiguousarray(Xbar, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(stage, dtype=np.float64)
    cdef double[:, :, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t M = Xv.shape[0], mu = Pv.shape[0], d = Pv.shape[1], j, i
    cdef unsigned char[::1] mv
    cdef bint use_mask = mask is not None
    if use_mask:
        mv = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t best_j = -1, best_i = -1, cand_i
    cdef double best = INFINITY, v, vmin, J
    with nogil:
        for j in range(M):
            if use_mask and mv[j] == 0:
                continue
            vmin = INFINITY
            cand_i = 0
            for i in range(mu):
                v = _quad(&Pv[i, 0, 0], &Xv[j, 0], d)
                if v < vmin:
                    vmin = v
                    cand_i = i
            J = sv[j] + vmin
            if best_j < 0 or J < best:
                best = J
                best_j = j
                best_i = cand_i
    return int(best_j), float(best), int(best_i)


cdef struct TankSearch:
    const double* uabs
    const double* rcost
    const double* xr
    const double* Q
    const double* QN
    const double* p
    const double* lo
    const double* hi
    double* states
    int M
    int N
    int substeps
    int method
    double dt
    double best
    int best_first


cdef inline double _err_quad(const double* x, const double* xr, const double* W) noexcept nogil:
    cdef double e[NT]
    cdef int i
    for i in range(NT):
        e[i] = x[i] - xr[i]
    return _quad(W, e, NT)


cdef void _tank_dfs(TankSearch* s, int depth, double cost, int first) noexcept nogil:
    cdef double* x = s.states + depth * NT
    cdef double* nxt = s.states + (depth + 1) * NT
    cdef double stage, total
    cdef int j, i
    if depth == s.N:
        total = cost + _err_quad(x, s.xr, s.QN)
        if total < s.best:
            s.best = total
            s.best_first = first
        return
    stage = _err_quad(x, s.xr, s.Q)
    for j in range(s.M):
        for i in range(NT):
            nxt[i] = x[i]
        _tank_step(nxt, s.uabs[j], s.p, s.dt, s.substeps, s.method, s.lo, s.hi)
        _tank_dfs(s, depth + 1, cost + (stage + s.rcost[j]), j if depth == 0 else first)


def nmpc_tank(x0, uabs, rcost, xr, Q, QN, int N, p, double dt, int substeps, int method, lo, hi):
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[::1] uv = np.ascontiguousarray(uabs, dtype=np.float64)
    cdef double[::1] rv = np.ascontiguousarray(rcost, dtype=np.float64)
    cdef double[::1] xrv = np.ascontiguousarray(xr, dtype=np.float64)
    cdef double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[:, ::1] QNv = np.ascontiguousarray(QN, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    states = np.zeros((N + 1) * NT, dtype=np.float64)
    cdef double[::1] stv = states
    cdef int i
    for i in range(NT):
        stv[i] = x0v[i]
    cdef TankSearch s
    s.uabs = &uv[0]
    s.rcost = &rv[0]
    s.xr = &xrv[0]
    s.Q = &Qv[0, 0]
    s.QN = &QNv[0, 0]
    s.p = &pv[0]
    s.lo = &lov[0]
    s.hi = &hiv[0]
    s.states = &stv[0]
    s.M = uv.shape[0]
    s.N = N
    s.substeps = substeps
    s.method = method
    s.dt = dt
    s.best = INFINITY
    s.best_first = -1
    with nogil:
        _tank_dfs(&s, 0, 0.0, 0)
    return int(s.best_first), float(s.best)


cdef struct LinSearch:
    const double* A
    const double* Bv
    const double* rcost
    const double* Q
    const double* QN
    double* states
    int n
    int M
    int N
    double best
    int best_first


cdef void _lin_dfs(LinSearch* s, int depth, double cost, int first) noexcept nogil:
    cdef int n = s.n
    cdef double* x = s.states + depth * n
    cdef double* nxt = s.states + (depth + 1) * n
    cdef double stage, total, acc
    cdef int j, a, b
    if depth == s.N:
        total = cost + _quad(s.QN, x, n)
        if total < s.best:
            s.best = total
            s.best_first = first
        return
    stage = _quad(s.Q, x, n)
    for j in range(s.M):
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += s.A[a * n + b] * x[b]
            nxt[a] = acc + s.Bv[j * n + a]
        _lin_dfs(s, depth + 1, cost + (stage + s.rcost[j]), j if depth == 0 else first)


def nmpc_linear(x0, A, Bv, Q, rcost, QN, int N):
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] Bvv = np.ascontiguousarray(Bv, dtype=np.float64)
    cdef double[::1] rv = np.ascontiguousarray(rcost, dtype=np.float64)
    cdef double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[:, ::1] QNv = np.ascontiguousarray(QN, dtype=np.float64)
    cdef int n = Av.shape[0], i
    states = np.zeros((N + 1) * n, dtype=np.float64)
    cdef double[::1] stv = states
    for i in range(n):
        stv[i] = x0v[i]
    cdef LinSearch s
    s.A = &Av[0, 0]
    s.Bv = &Bvv[0, 0]
    s.rcost = &rv[0]
    s.Q = &Qv[0, 0]
    s.QN = &QNv[0, 0]
    s.states = &stv[0]
    s.n = n
    s.M = Bvv.shape[0]
    s.N = N
    s.best = INFINITY
    s.best_first = -1
    with nogil:
        _lin_dfs(&s, 0, 0.0, 0)
    return int(s.best_first), float(s.best)


def halfspace_mask(X, H, h, double tol):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.float64).reshape(-1, Xv.shape[1])
    cdef double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef Py_ssize_t k = Xv.shape[0], r = Hv.shape[0], n = Xv.shape[1], a, i, j
    cdef double s
    out = np.ones(k, dtype=np.uint8)
    cdef unsigned char[::1] ov = out
    with nogil:
        for a in range(k):
            for i in range(r):
                s = 0.0
                for j in range(n):
                    s += Hv[i, j] * Xv[a, j]
                if not s <= hv[i] + tol:
                    ov[a] = 0
                    break
    return out

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled hot loops: leaf assignment, brute-force radius k-NN, octree radius k-NN.

All distance arithmetic is float32 and mirrors _pykern exactly, so the two
backends produce bit-identical squared distances.  The brute-force kernel
processes queries four at a time so that each pass over the point block reuses
the loaded coordinates (the scan is load-bound, not FLOP-bound); candidate
hits are detected with a vectorizable counting pass over fixed-size chunks and
resolved with a scalar rescan of the chunk.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange, threadid

cnp.import_array()

COMPILED = True

DEF CHUNK = 1024


def assign_leaves(float[:, ::1] pos, float[::1] rmin, float[::1] rlen, int levels):
    """Breadth-first leaf data index for each point, by midpoint descent."""
    cdef Py_ssize_t n = pos.shape[0]
    cdef int d = pos.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    cdef Py_ssize_t i
    cdef int m, a, mask
    cdef long long code
    cdef float half, mid
    cdef float lo[3]
    cdef float ln[3]
    for i in range(n):
        for a in range(d):
            lo[a] = rmin[a]
            ln[a] = rlen[a]
        code = 0
        for m in range(levels):
            mask = 0
            for a in range(d):
                half = ln[a] * <float>0.5
                mid = lo[a] + half
                if pos[i, a] >= mid:
                    lo[a] = mid
                    mask |= (1 << a)
                ln[a] = half
            code = (code << d) | mask
        o[i] = code
    return out


cdef inline long _insert_plain(float dd, int idx, int k, long nb,
                               int* oi, float* od) noexcept nogil:
    # Candidates arrive in ascending index order, so a plain (distance) shift
    # keeps equal distances in index order.
    cdef long pos
    if nb < k:
        pos = nb
        nb += 1
    else:
        pos = k - 1
    while pos > 0 and od[pos - 1] > dd:
        od[pos] = od[pos - 1]
        oi[pos] = oi[pos - 1]
        pos -= 1
    od[pos] = dd
    oi[pos] = idx
    return nb


cdef inline long _rescan3(const float* xs, const float* ys, const float* zs,
                          long a, long b, float qx, float qy, float qz,
                          long excl, float r2, int k, long nb,
                          int* oi, float* od) noexcept nogil:
    cdef long i
    cdef float dx, dy, dz, dd
    for i in range(a, b):
        if i == excl:
            continue
        dx = xs[i] - qx
        dy = ys[i] - qy
        dz = zs[i] - qz
        dd = dx * dx + dy * dy + dz * dz
        if nb < k:
            if dd >= r2:
                continue
        elif dd >= od[k - 1]:
            continue
        nb = _insert_plain(dd, <int>i, k, nb, oi, od)
    return nb


cdef inline long _scan_one(const float* xs, const float* ys, const float* zs,
                           int d, long n, const float* qv,
                           long excl, float r2, int k,
                           int* oi, float* od) noexcept nogil:
    """Generic single-query scan (d in {2,3}); used for d=2 and tail queries."""
    cdef long i, nb = 0
    cdef float dx, dy, dz, dd
    cdef float qx = qv[0]
    cdef float qy = qv[1]
    cdef float qz = qv[2] if d == 3 else <float>0.0
    for i in range(n):
        if i == excl:
            continue
        dx = xs[i] - qx
        dy = ys[i] - qy
        dd = dx * dx + dy * dy
        if d == 3:
            dz = zs[i] - qz
            dd = dd + dz * dz
        if nb < k:
            if dd >= r2:
                continue
        elif dd >= od[k - 1]:
            continue
        nb = _insert_plain(dd, <int>i, k, nb, oi, od)
    return nb


def brute_knn(float[:, ::1] ptsT, float[:, ::1] q, int k, float r2,
              exclude, int nthreads):
    """Exact radius-limited k-NN by full scan.

    ptsT: (d, N) float32, one contiguous row per axis.
    q:    (Q, d) float32 queries.
    exclude: optional int64 (Q,) point index to skip per query (self-queries).
    Returns (idx int32 (Q,k), d2 float32 (Q,k), cnt int32 (Q)); rows are
    sorted by (squared distance, point index) ascending, distance < r2 strict.
    """
    cdef int d = ptsT.shape[0]
    cdef long n = ptsT.shape[1]
    cdef long nq = q.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = np.full((nq, max(k, 1)), -1, dtype=np.int32)
    d2 = np.full((nq, max(k, 1)), np.float32(np.inf), dtype=np.float32)
    cnt = np.zeros(nq, dtype=np.int32)
    if nq == 0 or n == 0:
        return idx, d2, cnt
    cdef int[:, ::1] oidx = idx
    cdef float[:, ::1] od2 = d2
    cdef int[::1] ocnt = cnt
    cdef bint has_ex = exclude is not None
    cdef long long[::1] exv
    if has_ex:
        exv = np.ascontiguousarray(exclude, dtype=np.int64)
    else:
        exv = np.empty(1, dtype=np.int64)

    cdef const float* xs = &ptsT[0, 0]
    cdef const float* ys = &ptsT[1, 0]
    cdef const float* zs = &ptsT[d - 1, 0]   # only read when d == 3

    cdef long g, nb4, qi, base, cs, ce, i, rem
    cdef long nb0, nb1, nb2, nb3, e0, e1, e2, e3
    cdef int c0, c1, c2, c3
    cdef float qx0, qy0, qz0, qx1, qy1, qz1, qx2, qy2, qz2, qx3, qy3, qz3
    cdef float lim0, lim1, lim2, lim3
    cdef float xi, yi, zi, dx, dy, dz, dd

    if d == 3:
        nb4 = nq // 4
        for g in prange(nb4, nogil=True, schedule='static',
                        num_threads=(nthreads if nthreads > 0 else 1)):
            base = g * 4
            qx0 = q[base, 0]; qy0 = q[base, 1]; qz0 = q[base, 2]
            qx1 = q[base + 1, 0]; qy1 = q[base + 1, 1]; qz1 = q[base + 1, 2]
            qx2 = q[base + 2, 0]; qy2 = q[base + 2, 1]; qz2 = q[base + 2, 2]
            qx3 = q[base + 3, 0]; qy3 = q[base + 3, 1]; qz3 = q[base + 3, 2]
            e0 = exv[base] if has_ex else -1
            e1 = exv[base + 1] if has_ex else -1
            e2 = exv[base + 2] if has_ex else -1
            e3 = exv[base + 3] if has_ex else -1
            nb0 = 0; nb1 = 0; nb2 = 0; nb3 = 0
            lim0 = r2; lim1 = r2; lim2 = r2; lim3 = r2
            cs = 0
            while cs < n:
                ce = cs + CHUNK
                if ce > n:
                    ce = n
                c0 = 0; c1 = 0; c2 = 0; c3 = 0
                for i in range(cs, ce):
                    xi = xs[i]; yi = ys[i]; zi = zs[i]
                    dx = xi - qx0; dy = yi - qy0; dz = zi - qz0
                    dd = dx * dx + dy * dy + dz * dz
                    c0 = c0 + (dd < lim0)
                    dx = xi - qx1; dy = yi - qy1; dz = zi - qz1
                    dd = dx * dx + dy * dy + dz * dz
                    c1 = c1 + (dd < lim1)
                    dx = xi - qx2; dy = yi - qy2; dz = zi - qz2
                    dd = dx * dx + dy * dy + dz * dz
                    c2 = c2 + (dd < lim2)
                    dx = xi - qx3; dy = yi - qy3; dz = zi - qz3
                    dd = dx * dx + dy * dy + dz * dz
                    c3 = c3 + (dd < lim3)
                if c0 > 0:
                    nb0 = _rescan3(xs, ys, zs, cs, ce, qx0, qy0, qz0, e0, r2,
                                   k, nb0, &oidx[base, 0], &od2[base, 0])
                    lim0 = r2 if nb0 < k else od2[base, k - 1]
                if c1 > 0:
                    nb1 = _rescan3(xs, ys, zs, cs, ce, qx1, qy1, qz1, e1, r2,
                                   k, nb1, &oidx[base + 1, 0], &od2[base + 1, 0])
                    lim1 = r2 if nb1 < k else od2[base + 1, k - 1]
                if c2 > 0:
                    nb2 = _rescan3(xs, ys, zs, cs, ce, qx2, qy2, qz2, e2, r2,
                                   k, nb2, &oidx[base + 2, 0], &od2[base + 2, 0])
                    lim2 = r2 if nb2 < k else od2[base + 2, k - 1]
                if c3 > 0:
                    nb3 = _rescan3(xs, ys, zs, cs, ce, qx3, qy3, qz3, e3, r2,
                                   k, nb3, &oidx[base + 3, 0], &od2[base + 3, 0])
                    lim3 = r2 if nb3 < k else od2[base + 3, k - 1]
                cs = ce
            ocnt[base] = <int>nb0
            ocnt[base + 1] = <int>nb1
            ocnt[base + 2] = <int>nb2
            ocnt[base + 3] = <int>nb3
        rem = nb4 * 4
    else:
        rem = 0
    for qi in range(rem, nq):
        with nogil:
            e0 = exv[qi] if has_ex else -1
            nb0 = _scan_one(xs, ys, zs, d, n, &q[qi, 0], e0, r2, k,
                            &oidx[qi, 0], &od2[qi, 0])
            ocnt[qi] = <int>nb0
    return idx, d2, cnt


cdef inline long _insert_tie(float dd, int oid, float r2, int k, long nb,
                             int* oi, float* od) noexcept nogil:
    # Candidates arrive in leaf order, not global index order, so ties on
    # distance must be broken by original point index explicitly.
    cdef long pos
    if nb < k:
        if dd >= r2:
            return nb
        pos = nb
        nb += 1
    else:
        if dd > od[k - 1] or (dd == od[k - 1] and oid >= oi[k - 1]):
            return nb
        pos = k - 1
    while pos > 0 and (od[pos - 1] > dd or (od[pos - 1] == dd and oi[pos - 1] > oid)):
        od[pos] = od[pos - 1]
        oi[pos] = oi[pos - 1]
        pos -= 1
    od[pos] = dd
    oi[pos] = oid
    return nb


def octree_knn(float[:, ::1] ptsT, int[::1] orig, long long[::1] indptr,
               float[::1] rmin, float[::1] rlen, int levels,
               float[:, ::1] q, int k, float r2, exclude, int nthreads):
    """Radius k-NN via breadth-first traversal of the full 2^d-ary tree.

    ptsT holds the points sorted by leaf (axis-major (d, N)); orig maps sorted
    position -> original point index; indptr is the per-leaf CSR offset array.
    Node boxes are rebuilt during descent with the same float32 arithmetic as
    assign_leaves, and each node's upper bound is carried exactly (the binding
    ancestor midpoint), so pruning never discards a leaf holding a true
    neighbor and no tolerance margin is needed.
    """
    cdef int d = ptsT.shape[0]
    cdef long nq = q.shape[0]
    cdef int nchild = 1 << d
    # nonleaf = sum_{m<levels} 2^{dm}; total leaves = 2^{d*levels}
    cdef long long nonleaf = 0, total = 1
    cdef int m
    for m in range(levels):
        nonleaf += total
        total *= nchild
    cdef long long maxn = nonleaf + total

    idx = np.full((nq, max(k, 1)), -1, dtype=np.int32)
    d2 = np.full((nq, max(k, 1)), np.float32(np.inf), dtype=np.float32)
    cnt = np.zeros(nq, dtype=np.int32)
    if nq == 0:
        return idx, d2, cnt
    cdef int[:, ::1] oidx = idx
    cdef float[:, ::1] od2 = d2
    cdef int[::1] ocnt = cnt
    cdef bint has_ex = exclude is not None
    cdef long long[::1] exv
    if has_ex:
        exv = np.ascontiguousarray(exclude, dtype=np.int64)
    else:
        exv = np.empty(1, dtype=np.int64)

    cdef int nt = nthreads if nthreads > 0 else 1
    qid_buf = np.empty((nt, maxn), dtype=np.int64)
    qlo_buf = np.empty((nt, maxn, 3), dtype=np.float32)
    qln_buf = np.empty((nt, maxn, 3), dtype=np.float32)
    qhi_buf = np.empty((nt, maxn, 3), dtype=np.float32)
    cdef long long[:, ::1] qid = qid_buf
    cdef float[:, :, ::1] qlo = qlo_buf
    cdef float[:, :, ::1] qln = qln_buf
    cdef float[:, :, ::1] qhi = qhi_buf

    cdef long qi, nb, head, tail, t, s, e, excl
    cdef long long node, child, di
    cdef int tid, a, j, oid
    cdef float qv0, qv1, qv2, acc, dx, dd, half, mid, v
    cdef float clo[3]
    cdef float cln[3]
    cdef float chi[3]

    for qi in prange(nq, nogil=True, schedule='static', num_threads=nt):
        tid = threadid()
        excl = exv[qi] if has_ex else -1
        qv0 = q[qi, 0]
        qv1 = q[qi, 1]
        qv2 = q[qi, 2] if d == 3 else <float>0.0
        nb = 0
        head = 0
        tail = 0
        # seed with the root if it intersects the query ball
        acc = 0
        for a in range(d):
            v = q[qi, a]
            if v < rmin[a]:
                dx = rmin[a] - v
            elif v > rmin[a] + rlen[a]:
                dx = v - (rmin[a] + rlen[a])
            else:
                dx = 0
            acc = acc + dx * dx
        if acc <= r2:
            qid[tid, 0] = 0
            for a in range(d):
                qlo[tid, 0, a] = rmin[a]
                qln[tid, 0, a] = rlen[a]
                qhi[tid, 0, a] = rmin[a] + rlen[a]
            tail = 1
        while head < tail:
            node = qid[tid, head]
            if node >= nonleaf:
                # leaf: scan its bucket
                di = node - nonleaf
                s = indptr[di]
                e = indptr[di + 1]
                for t in range(s, e):
                    oid = orig[t]
                    if oid == excl:
                        continue
                    dx = ptsT[0, t] - qv0
                    dd = dx * dx
                    dx = ptsT[1, t] - qv1
                    dd = dd + dx * dx
                    if d == 3:
                        dx = ptsT[2, t] - qv2
                        dd = dd + dx * dx
                    nb = _insert_tie(dd, oid, r2, k, nb,
                                     &oidx[qi, 0], &od2[qi, 0])
            else:
                for j in range(1, nchild + 1):
                    child = node * nchild + j
                    acc = 0
                    for a in range(d):
                        half = qln[tid, head, a] * <float>0.5
                        mid = qlo[tid, head, a] + half
                        cln[a] = half
                        if (j - 1) & (1 << a):
                            clo[a] = mid
                            chi[a] = qhi[tid, head, a]
                        else:
                            clo[a] = qlo[tid, head, a]
                            chi[a] = mid
                        v = q[qi, a]
                        if v < clo[a]:
                            dx = clo[a] - v
                        elif v > chi[a]:
                            dx = v - chi[a]
                        else:
                            dx = 0
                        acc = acc + dx * dx
                    if acc <= r2:
                        qid[tid, tail] = child
                        for a in range(d):
                            qlo[tid, tail, a] = clo[a]
                            qln[tid, tail, a] = cln[a]
                            qhi[tid, tail, a] = chi[a]
                        tail = tail + 1
            head = head + 1
        ocnt[qi] = <int>nb
    return idx, d2, cnt

"""Pure-numpy fallback for the compiled kernels.

Every squared distance is computed with the same float32 operations in the
same order as _ckern.pyx, so both backends return bit-identical results.
"""

import numpy as np

COMPILED = False

_F32H = np.float32(0.5)


def assign_leaves(pos, rmin, rlen, levels):
    """Breadth-first leaf data index for each point, by midpoint descent."""
    pos = np.asarray(pos, dtype=np.float32)
    n, d = pos.shape
    lo = np.broadcast_to(np.asarray(rmin, np.float32), (n, d)).copy()
    ln = np.asarray(rlen, np.float32).copy()
    code = np.zeros(n, dtype=np.int64)
    for _ in range(levels):
        half = ln * _F32H
        mid = lo + half                      # (n, d) float32
        high = pos >= mid
        lo = np.where(high, mid, lo)
        ln = half
        mask = np.zeros(n, dtype=np.int64)
        for a in range(d):
            mask |= high[:, a].astype(np.int64) << a
        code = (code << d) | mask
    return code


def _d2_to_query(ptsT, qv):
    """Float32 squared distances, accumulated axis by axis like the C kernel."""
    dx = ptsT[0] - qv[0]
    dd = dx * dx
    dx = ptsT[1] - qv[1]
    dd = dd + dx * dx
    if ptsT.shape[0] == 3:
        dx = ptsT[2] - qv[2]
        dd = dd + dx * dx
    return dd


def _select_k(dd, ids, r2, k):
    """Indices/distances of the k nearest under (distance, index) order."""
    keep = np.flatnonzero(dd < r2)
    if keep.size > 1:
        order = np.lexsort((ids[keep], dd[keep]))[:k]
        keep = keep[order]
    else:
        keep = keep[:k]
    return ids[keep], dd[keep]


def brute_knn(ptsT, q, k, r2, exclude, nthreads):
    ptsT = np.asarray(ptsT, dtype=np.float32)
    q = np.asarray(q, dtype=np.float32)
    nq = q.shape[0]
    n = ptsT.shape[1]
    idx = np.full((nq, max(k, 1)), -1, dtype=np.int32)
    d2 = np.full((nq, max(k, 1)), np.inf, dtype=np.float32)
    cnt = np.zeros(nq, dtype=np.int32)
    if nq == 0 or n == 0:
        return idx, d2, cnt
    all_ids = np.arange(n, dtype=np.int64)
    r2 = np.float32(r2)
    for qi in range(nq):
        dd = _d2_to_query(ptsT, q[qi])
        if exclude is not None and 0 <= exclude[qi] < n:
            dd = dd.copy()
            dd[exclude[qi]] = np.float32(np.inf)
        ii, vv = _select_k(dd, all_ids, r2, k)
        m = ii.size
        idx[qi, :m] = ii
        d2[qi, :m] = vv
        cnt[qi] = m
    return idx, d2, cnt


def octree_knn(ptsT, orig, indptr, rmin, rlen, levels, q, k, r2,
               exclude, nthreads):
    ptsT = np.asarray(ptsT, dtype=np.float32)
    q = np.asarray(q, dtype=np.float32)
    d = ptsT.shape[0]
    nq = q.shape[0]
    nchild = 1 << d
    nonleaf = sum(nchild ** m for m in range(levels))
    rmin = np.asarray(rmin, np.float32)
    rlen = np.asarray(rlen, np.float32)
    rhi = rmin + rlen
    idx = np.full((nq, max(k, 1)), -1, dtype=np.int32)
    d2 = np.full((nq, max(k, 1)), np.inf, dtype=np.float32)
    cnt = np.zeros(nq, dtype=np.int32)
    r2 = np.float32(r2)
    orig = np.asarray(orig)
    for qi in range(nq):
        qv = q[qi]
        # breadth-first queue of (node id, lo, ln, hi); boxes carried in
        # float32 with the exact assign_leaves arithmetic so pruning is sound
        acc = np.float32(0.0)
        for a in range(d):
            if qv[a] < rmin[a]:
                dx = rmin[a] - qv[a]
            elif qv[a] > rhi[a]:
                dx = qv[a] - rhi[a]
            else:
                dx = np.float32(0.0)
            acc = acc + dx * dx
        queue = []
        if acc <= r2:
            queue.append((0, rmin.copy(), rlen.copy(), rhi.copy()))
        head = 0
        cand = []
        while head < len(queue):
            node, lo, ln, hi = queue[head]
            head += 1
            if node >= nonleaf:
                di = node - nonleaf
                s, e = indptr[di], indptr[di + 1]
                if e > s:
                    cand.append(np.arange(s, e))
                continue
            half = ln * _F32H
            mid = lo + half
            for j in range(1, nchild + 1):
                clo = lo.copy()
                chi = mid.copy()
                for a in range(d):
                    if (j - 1) & (1 << a):
                        clo[a] = mid[a]
                        chi[a] = hi[a]
                acc = np.float32(0.0)
                for a in range(d):
                    if qv[a] < clo[a]:
                        dx = clo[a] - qv[a]
                    elif qv[a] > chi[a]:
                        dx = qv[a] - chi[a]
                    else:
                        dx = np.float32(0.0)
                    acc = acc + dx * dx
                if acc <= r2:
                    queue.append((node * nchild + j, clo, half, chi))
        if not cand:
            continue
        slots = np.concatenate(cand)
        ids = orig[slots].astype(np.int64)
        dd = _d2_to_query(ptsT[:, slots], qv)
        if exclude is not None and exclude[qi] >= 0:
            dd = np.where(ids == exclude[qi], np.float32(np.inf), dd)
        ii, vv = _select_k(dd, ids, r2, k)
        m = ii.size
        idx[qi, :m] = ii
        d2[qi, :m] = vv
        cnt[qi] = m
    return idx, d2, cnt

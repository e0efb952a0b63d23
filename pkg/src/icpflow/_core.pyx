# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: translation-histogram voting and exact 3-D nearest neighbor.

Both kernels must agree bit-for-bit with the numpy fallback, so the float
expressions here mirror the ones in ``_fallback.py`` (no FMA contraction, see
setup.py).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, sqrt, INFINITY

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64

DEF LEAF_SIZE = 8
DEF MAX_DEPTH = 128


def histogram_votes(const f64[:, ::1] src, const f64[:, ::1] dst,
                    tau, double bin_size, shape):
    """Count pairwise differences ``src[i] - dst[j]`` into a 3-D grid.

    Bin ``k`` along an axis covers ``[-tau + k*bin, -tau + (k+1)*bin)``.
    Differences with ``|v| > tau`` on any axis are discarded.
    """
    cdef double tx = tau[0], ty = tau[1], tz = tau[2]
    cdef i64 lx = shape[0], ly = shape[1], lz = shape[2]
    cdef Py_ssize_t m = src.shape[0], n = dst.shape[0], i, j
    cdef double vx, vy, vz, sx, sy, sz
    cdef i64 kx, ky, kz
    out = np.zeros(lx * ly * lz, dtype=np.int64)
    cdef i64[::1] counts = out
    with nogil:
        for i in range(m):
            sx = src[i, 0]
            sy = src[i, 1]
            sz = src[i, 2]
            for j in range(n):
                vx = sx - dst[j, 0]
                if fabs(vx) > tx:
                    continue
                vy = sy - dst[j, 1]
                if fabs(vy) > ty:
                    continue
                vz = sz - dst[j, 2]
                if fabs(vz) > tz:
                    continue
                kx = <i64>floor((vx + tx) / bin_size)
                ky = <i64>floor((vy + ty) / bin_size)
                kz = <i64>floor((vz + tz) / bin_size)
                if kx >= lx:
                    kx = lx - 1
                if ky >= ly:
                    ky = ly - 1
                if kz >= lz:
                    kz = lz - 1
                counts[(kx * ly + ky) * lz + kz] += 1
    return out


cdef class KDTree:
    """Exact nearest-neighbor index over a fixed (N, 3) array.

    Ties on squared distance resolve to the lowest original index.
    """
    cdef readonly object data
    cdef f64[:, ::1] pts
    cdef i64[::1] order
    # node arrays: split dim (-1 for leaf), split value, children, leaf range
    cdef i64[::1] dim
    cdef f64[::1] split
    cdef i64[::1] left
    cdef i64[::1] right
    cdef i64[::1] start
    cdef i64[::1] stop
    cdef Py_ssize_t n_nodes

    def __init__(self, points):
        data = np.ascontiguousarray(points, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        self.data = data
        self.pts = data
        cdef Py_ssize_t n = data.shape[0]
        cap = 2 * n + 1
        self.order = np.arange(n, dtype=np.int64)
        self.dim = np.full(cap, -1, dtype=np.int64)
        self.split = np.zeros(cap, dtype=np.float64)
        self.left = np.full(cap, -1, dtype=np.int64)
        self.right = np.full(cap, -1, dtype=np.int64)
        self.start = np.zeros(cap, dtype=np.int64)
        self.stop = np.zeros(cap, dtype=np.int64)
        self.n_nodes = 0
        if n > 0:
            with nogil:
                self._build(n)

    cdef void _build(self, Py_ssize_t n) noexcept nogil:
        cdef i64 s_lo[MAX_DEPTH * 2]
        cdef i64 s_hi[MAX_DEPTH * 2]
        cdef i64 s_parent[MAX_DEPTH * 2]
        cdef int s_side[MAX_DEPTH * 2]
        cdef int top = 1
        cdef i64 lo, hi, parent, node, mid, k, d
        cdef int side
        cdef double mn[3]
        cdef double mx[3]
        cdef double v, best
        s_lo[0] = 0
        s_hi[0] = n
        s_parent[0] = -1
        s_side[0] = 0
        while top > 0:
            top -= 1
            lo = s_lo[top]
            hi = s_hi[top]
            parent = s_parent[top]
            side = s_side[top]
            node = self.n_nodes
            self.n_nodes += 1
            if parent >= 0:
                if side == 0:
                    self.left[parent] = node
                else:
                    self.right[parent] = node
            self.start[node] = lo
            self.stop[node] = hi
            if hi - lo <= LEAF_SIZE:
                continue
            for d in range(3):
                mn[d] = INFINITY
                mx[d] = -INFINITY
            for k in range(lo, hi):
                for d in range(3):
                    v = self.pts[self.order[k], d]
                    if v < mn[d]:
                        mn[d] = v
                    if v > mx[d]:
                        mx[d] = v
            d = 0
            best = mx[0] - mn[0]
            for k in range(1, 3):
                if mx[k] - mn[k] > best:
                    best = mx[k] - mn[k]
                    d = k
            if best == 0.0:
                continue
            mid = lo + (hi - lo) // 2
            self._select(lo, hi - 1, mid, d)
            self.dim[node] = d
            self.split[node] = self.pts[self.order[mid], d]
            # right child pushed first so the left one is numbered first
            s_lo[top] = mid
            s_hi[top] = hi
            s_parent[top] = node
            s_side[top] = 1
            top += 1
            s_lo[top] = lo
            s_hi[top] = mid
            s_parent[top] = node
            s_side[top] = 0
            top += 1

    cdef void _select(self, i64 lo, i64 hi, i64 kth, i64 d) noexcept nogil:
        # Hoare quickselect on order[lo..hi] by coordinate d; afterwards
        # order[kth] holds the kth value, smaller-or-equal ones before it.
        cdef i64 i, j, tmp
        cdef double pivot
        while hi > lo:
            pivot = self.pts[self.order[(lo + hi) // 2], d]
            i = lo
            j = hi
            while i <= j:
                while self.pts[self.order[i], d] < pivot:
                    i += 1
                while self.pts[self.order[j], d] > pivot:
                    j -= 1
                if i <= j:
                    tmp = self.order[i]
                    self.order[i] = self.order[j]
                    self.order[j] = tmp
                    i += 1
                    j -= 1
            if kth <= j:
                hi = j
            elif kth >= i:
                lo = i
            else:
                return

    def __len__(self):
        return self.pts.shape[0]

    cdef void _query_one(self, double qx, double qy, double qz,
                         i64* best_idx, double* best_d2) noexcept nogil:
        cdef i64 stack[MAX_DEPTH * 2]
        cdef double bound[MAX_DEPTH * 2]
        cdef int top = 0
        cdef i64 node, k, idx, near, far
        cdef double dx, dy, dz, d2, diff, q
        cdef double bd2 = best_d2[0]
        cdef i64 bi = best_idx[0]
        stack[0] = 0
        bound[0] = 0.0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if bound[top] > bd2:
                continue
            if self.dim[node] < 0:
                for k in range(self.start[node], self.stop[node]):
                    idx = self.order[k]
                    dx = self.pts[idx, 0] - qx
                    dy = self.pts[idx, 1] - qy
                    dz = self.pts[idx, 2] - qz
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < bd2 or (d2 == bd2 and idx < bi):
                        bd2 = d2
                        bi = idx
                continue
            if self.dim[node] == 0:
                q = qx
            elif self.dim[node] == 1:
                q = qy
            else:
                q = qz
            diff = q - self.split[node]
            if diff < 0:
                near = self.left[node]
                far = self.right[node]
            else:
                near = self.right[node]
                far = self.left[node]
            # far side pushed first, explored after near side
            stack[top] = far
            bound[top] = diff * diff
            top += 1
            stack[top] = near
            bound[top] = 0.0
            top += 1
        best_idx[0] = bi
        best_d2[0] = bd2

    def query(self, points):
        """Nearest neighbor of every row of ``points``: (indices, distances)."""
        q = np.ascontiguousarray(points, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 3:
            raise ValueError("queries must have shape (M, 3)")
        if self.pts.shape[0] == 0:
            raise ValueError("empty index")
        cdef f64[:, ::1] qv = q
        cdef Py_ssize_t m = q.shape[0], i
        idx_out = np.empty(m, dtype=np.int64)
        dist_out = np.empty(m, dtype=np.float64)
        cdef i64[::1] iv = idx_out
        cdef f64[::1] dv = dist_out
        cdef i64 bi
        cdef double bd2
        with nogil:
            for i in range(m):
                bi = -1
                bd2 = INFINITY
                self._query_one(qv[i, 0], qv[i, 1], qv[i, 2], &bi, &bd2)
                iv[i] = bi
                dv[i] = sqrt(bd2)
        return idx_out, dist_out


cdef inline i64 _find(i64[::1] parent, i64 a) noexcept nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


cdef inline Py_ssize_t _lower_bound(const i64[::1] keys, Py_ssize_t n, i64 key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


def density_components(points, double eps, Py_ssize_t min_samples):
    """DBSCAN-style component ids (arbitrary but deterministic), -1 for noise.

    Neighbors are points within ``eps`` (inclusive, self counted). Core points
    need ``min_samples`` neighbors; non-core points join the component of their
    nearest core neighbor, ties to the lowest index.
    """
    pts_arr = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts_arr.shape[0]
    labels_arr = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels_arr
    cell = np.floor(pts_arr / eps).astype(np.int64)
    cell -= cell.min(axis=0)
    dims = cell.max(axis=0) + 3
    # +1 offset so neighbor cells at -1 stay non-negative
    key_arr = ((cell[:, 0] + 1) * dims[1] + (cell[:, 1] + 1)) * dims[2] + (cell[:, 2] + 1)
    order_arr = np.argsort(key_arr, kind="stable").astype(np.int64)
    sorted_keys = key_arr[order_arr]
    ukeys_arr, ustart_arr = np.unique(sorted_keys, return_index=True)
    ustop_arr = np.append(ustart_arr[1:], n).astype(np.int64)
    ustart_arr = ustart_arr.astype(np.int64)

    cdef const f64[:, ::1] p = pts_arr
    cdef const i64[::1] key = key_arr
    cdef const i64[::1] order = order_arr
    cdef const i64[::1] ukeys = ukeys_arr
    cdef const i64[::1] ustart = ustart_arr
    cdef const i64[::1] ustop = ustop_arr
    cdef Py_ssize_t nu = ukeys_arr.shape[0]
    cdef i64 dy = dims[1], dz = dims[2]
    count_arr = np.zeros(n, dtype=np.int64)
    parent_arr = np.arange(n, dtype=np.int64)
    best_arr = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] count = count_arr
    cdef i64[::1] parent = parent_arr
    cdef i64[::1] best = best_arr
    cdef i64[::1] labels = labels_arr
    cdef double e2 = eps * eps, dx_, dy_, dz_, d2
    cdef double[::1] best_d2 = np.full(n, INFINITY)
    cdef Py_ssize_t i, u, k, pos
    cdef i64 j, a, b, ox, oy, oz, nk
    cdef int pass_no
    core_arr = np.zeros(n, dtype=np.int8)
    cdef cnp.int8_t[::1] is_core = core_arr

    with nogil:
        for pass_no in range(2):
            for i in range(n):
                if pass_no == 1 and not is_core[i]:
                    continue
                for ox in range(-1, 2):
                    for oy in range(-1, 2):
                        for oz in range(-1, 2):
                            nk = key[i] + (ox * dy + oy) * dz + oz
                            pos = _lower_bound(ukeys, nu, nk)
                            if pos >= nu or ukeys[pos] != nk:
                                continue
                            for k in range(ustart[pos], ustop[pos]):
                                j = order[k]
                                dx_ = p[j, 0] - p[i, 0]
                                dy_ = p[j, 1] - p[i, 1]
                                dz_ = p[j, 2] - p[i, 2]
                                d2 = dx_ * dx_ + dy_ * dy_ + dz_ * dz_
                                if d2 > e2:
                                    continue
                                if pass_no == 0:
                                    count[i] += 1
                                elif is_core[j]:
                                    if j > i:
                                        a = _find(parent, i)
                                        b = _find(parent, j)
                                        if a != b:
                                            if a < b:
                                                parent[b] = a
                                            else:
                                                parent[a] = b
                                elif d2 < best_d2[j] or (d2 == best_d2[j] and i < best[j]):
                                    best_d2[j] = d2
                                    best[j] = i
            if pass_no == 0:
                for i in range(n):
                    if count[i] >= min_samples:
                        is_core[i] = 1
        for i in range(n):
            if is_core[i]:
                labels[i] = _find(parent, i)
        for i in range(n):
            if not is_core[i] and best[i] >= 0:
                labels[i] = labels[best[i]]
    return labels_arr

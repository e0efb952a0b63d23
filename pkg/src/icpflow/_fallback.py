"""Pure numpy/scipy versions of the kernels in ``_core.pyx``.

Results are bit-identical to the compiled kernels; only speed differs.
"""
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

# rows of src processed per broadcast chunk in histogram_votes
_CHUNK_ELEMS = 1 << 20


def histogram_votes(src, dst, tau, bin_size, shape):
    src = np.ascontiguousarray(src, dtype=np.float64)
    dst = np.ascontiguousarray(dst, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    shape = np.asarray(shape, dtype=np.int64)
    counts = np.zeros(int(np.prod(shape)), dtype=np.int64)
    if len(src) == 0 or len(dst) == 0:
        return counts
    step = max(1, _CHUNK_ELEMS // len(dst))
    for lo in range(0, len(src), step):
        diff = src[lo:lo + step, None, :] - dst[None, :, :]
        diff = diff.reshape(-1, 3)
        keep = np.all(np.abs(diff) <= tau, axis=1)
        diff = diff[keep]
        k = np.floor((diff + tau) / bin_size).astype(np.int64)
        k = np.minimum(k, shape - 1)
        flat = (k[:, 0] * shape[1] + k[:, 1]) * shape[2] + k[:, 2]
        counts += np.bincount(flat, minlength=counts.size)
    return counts


class KDTree:
    """Exact nearest neighbor via scipy, with lowest-index tie-breaking.

    scipy does not specify which of several equidistant points it returns, so
    every query whose two best distances tie is re-resolved by brute force.
    """

    def __init__(self, points):
        data = np.ascontiguousarray(points, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        self.data = data
        self._tree = cKDTree(data) if len(data) else None

    def __len__(self):
        return len(self.data)

    def query(self, points):
        q = np.ascontiguousarray(points, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 3:
            raise ValueError("queries must have shape (M, 3)")
        if self._tree is None:
            raise ValueError("empty index")
        if len(self.data) == 1:
            idx = np.zeros(len(q), dtype=np.int64)
        else:
            dist, idx = self._tree.query(q, k=2)
            idx = idx[:, 0].astype(np.int64)
            tied = np.flatnonzero(dist[:, 0] == dist[:, 1])
            for i in tied:
                d2 = ((self.data - q[i]) ** 2).sum(axis=1)
                idx[i] = int(np.argmin(d2))
        d2 = ((self.data[idx] - q) ** 2).sum(axis=1)
        return idx, np.sqrt(d2)


def density_components(points, eps, min_samples):
    """Same partition as ``_core.density_components``; component ids may differ."""
    n = len(points)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    pairs = cKDTree(points).query_pairs(eps, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    degree = np.bincount(np.concatenate([i, j]), minlength=n) + 1
    core = degree >= min_samples
    if not core.any():
        return labels
    both = core[i] & core[j]
    graph = coo_matrix(
        (np.ones(int(both.sum()), dtype=np.int8), (i[both], j[both])), shape=(n, n)
    )
    _, comp = connected_components(graph, directed=False)
    labels[core] = comp[core]

    # border points: non-core with at least one core neighbor
    a = np.concatenate([i, j])
    b = np.concatenate([j, i])
    edge = ~core[a] & core[b]
    a, b = a[edge], b[edge]
    if len(a):
        d2 = ((points[a] - points[b]) ** 2).sum(axis=1)
        order = np.lexsort((b, d2, a))
        a, b = a[order], b[order]
        first = np.ones(len(a), dtype=bool)
        first[1:] = a[1:] != a[:-1]
        labels[a[first]] = comp[b[first]]
    return labels

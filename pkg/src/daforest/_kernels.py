"""Numba kernels for growing and applying weighted CART trees.

Trees are grown to purity (no depth cap, min 2 samples to split) with one of
two split policies:

* policy 0 ("best of sqrt(d)"): draw ``n_candidates`` distinct features,
  scan midpoint thresholds between consecutive distinct sorted values, and
  keep the split with the lowest total weighted Gini impurity of the
  children. Ties break toward the lowest feature index, then the smallest
  threshold. The node becomes a leaf when every drawn candidate is constant
  there; zero-decrease splits are taken (growth runs until leaves are pure,
  which parity problems like XOR require).
* policy 1 ("single random feature"): draw one feature and a threshold
  uniformly inside the node's (min, max) for it, retrying up to 10 draws
  when the drawn feature is constant at the node, then falling back to a
  leaf. The drawn split is taken regardless of its impurity decrease.

All randomness comes from an inlined splitmix64 stream seeded per tree, so a
tree is a pure function of (X, y, w, policy, seed, sample_idx) and results
never depend on thread scheduling.
"""

import numpy as np
from numba import njit

POLICY_BEST_OF_SQRT_D = 0
POLICY_SINGLE_RANDOM_FEATURE = 1

SRF_MAX_DRAWS = 10

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(inline="always")
def _next_u64(state):
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def _rand_unit(state):
    return float((_next_u64(state) >> np.uint64(11))) * _U53


@njit(inline="always")
def _rand_below(state, n):
    return np.int64(_next_u64(state) % np.uint64(n))


@njit(cache=True, nogil=True)
def grow_tree(X, y, w, n_classes, policy, n_candidates, seed, sample_idx):
    """Grow one tree over the rows listed in sample_idx (duplicates allowed).

    Returns (n_nodes, feature, threshold, left, right, mass, dist) where
    feature[i] == -1 marks a leaf, mass holds the leaf's total sample weight,
    and dist holds leaf class distributions (zero rows for internal nodes).
    A leaf whose samples all carry zero weight falls back to unweighted
    class frequencies so its distribution is still well formed.
    """
    n = sample_idx.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1

    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    mass = np.zeros(cap, np.float64)
    dist = np.zeros((cap, n_classes), np.float64)

    idx = sample_idx.astype(np.int64)
    tmp = np.empty(n, np.int64)
    vals = np.empty(n, np.float64)
    labs = np.empty(n, np.int32)
    wts = np.empty(n, np.float64)
    perm = np.arange(d)
    cw = np.zeros(n_classes, np.float64)
    cl = np.zeros(n_classes, np.float64)
    ucnt = np.zeros(n_classes, np.float64)

    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_node = np.empty(cap, np.int64)

    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)

    node_count = 1
    sp = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_node[0] = 0
    sp = 1

    while sp > 0:
        sp -= 1
        start = stack_start[sp]
        end = stack_end[sp]
        node = stack_node[sp]
        ns = end - start

        for k in range(n_classes):
            cw[k] = 0.0
            ucnt[k] = 0.0
        first_label = y[idx[start]]
        pure = True
        for i in range(ns):
            r = idx[start + i]
            c = y[r]
            labs[i] = c
            wt = w[r]
            wts[i] = wt
            cw[c] += wt
            ucnt[c] += 1.0
            if c != first_label:
                pure = False
        total_w = 0.0
        for k in range(n_classes):
            total_w += cw[k]

        best_feat = -1
        best_thr = 0.0
        if not pure and ns >= 2:
            if policy == POLICY_BEST_OF_SQRT_D:
                best_imp = np.inf

                nc = n_candidates if n_candidates < d else d
                for ci in range(nc):
                    j = ci + _rand_below(state, d - ci)
                    t = perm[ci]
                    perm[ci] = perm[j]
                    perm[j] = t
                # evaluate in ascending feature order so equal-impurity ties
                # resolve to the lowest feature index
                for a in range(1, nc):
                    key = perm[a]
                    b = a - 1
                    while b >= 0 and perm[b] > key:
                        perm[b + 1] = perm[b]
                        b -= 1
                    perm[b + 1] = key

                for ci in range(nc):
                    f = perm[ci]
                    for i in range(ns):
                        vals[i] = X[idx[start + i], f]
                    order = np.argsort(vals[:ns])
                    if vals[order[0]] == vals[order[ns - 1]]:
                        continue
                    for k in range(n_classes):
                        cl[k] = 0.0
                    w_left = 0.0
                    for pos in range(ns - 1):
                        ii = order[pos]
                        wt = wts[ii]
                        w_left += wt
                        cl[labs[ii]] += wt
                        v1 = vals[ii]
                        v2 = vals[order[pos + 1]]
                        if v1 == v2:
                            continue
                        w_right = total_w - w_left
                        if w_left <= 0.0 or w_right <= 0.0:
                            continue
                        sl = 0.0
                        sr = 0.0
                        for k in range(n_classes):
                            a_ = cl[k]
                            sl += a_ * a_
                            b_ = cw[k] - a_
                            sr += b_ * b_
                        imp = (w_left - sl / w_left) + (w_right - sr / w_right)
                        if imp < best_imp:
                            thr = 0.5 * (v1 + v2)
                            if thr <= v1:
                                thr = np.nextafter(v1, v2)
                            if thr >= v2:
                                # v1, v2 are adjacent floats: split at v1
                                thr = v1
                            best_imp = imp
                            best_feat = f
                            best_thr = thr
            else:
                for _ in range(SRF_MAX_DRAWS):
                    f = _rand_below(state, d)
                    mn = np.inf
                    mx = -np.inf
                    for i in range(ns):
                        v = X[idx[start + i], f]
                        if v < mn:
                            mn = v
                        if v > mx:
                            mx = v
                    if mx > mn:
                        thr = mn + _rand_unit(state) * (mx - mn)
                        if thr <= mn:
                            thr = np.nextafter(mn, mx)
                        if thr >= mx:
                            thr = np.nextafter(mx, mn)
                        if mn < thr < mx or (thr == mn and mn < mx):
                            best_feat = f
                            best_thr = thr
                            break

        if best_feat < 0:
            mass[node] = total_w
            if total_w > 0.0:
                for k in range(n_classes):
                    dist[node, k] = cw[k] / total_w
            else:
                for k in range(n_classes):
                    dist[node, k] = ucnt[k] / ns
            continue

        nl = 0
        for i in range(ns):
            r = idx[start + i]
            if X[r, best_feat] <= best_thr:
                tmp[nl] = r
                nl += 1
        nr = nl
        for i in range(ns):
            r = idx[start + i]
            if X[r, best_feat] > best_thr:
                tmp[nr] = r
                nr += 1
        for i in range(ns):
            idx[start + i] = tmp[i]

        lid = node_count
        rid = node_count + 1
        node_count += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack_start[sp] = start + nl
        stack_end[sp] = end
        stack_node[sp] = rid
        sp += 1
        stack_start[sp] = start
        stack_end[sp] = start + nl
        stack_node[sp] = lid
        sp += 1

    return (node_count, feature[:node_count], threshold[:node_count],
            left[:node_count], right[:node_count], mass[:node_count],
            dist[:node_count])


@njit(cache=True, nogil=True)
def apply_tree(feature, threshold, left, right, X):
    """Route every row of X to its leaf; returns leaf node ids."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def bootstrap_indices(n, seed):
    """n uniform draws with replacement from 0..n-1, from a splitmix64 stream."""
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    out = np.empty(n, np.int64)
    for i in range(n):
        out[i] = _rand_below(state, n)
    return out


@njit(cache=True, nogil=True)
def weighted_bootstrap_indices(cdf, seed):
    """n draws with replacement, probability proportional to weights.

    ``cdf`` is the inclusive cumulative sum of the (non-negative) weights;
    draws use inverse-CDF sampling with binary search.
    """
    n = cdf.shape[0]
    total = cdf[n - 1]
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    out = np.empty(n, np.int64)
    for i in range(n):
        u = _rand_unit(state) * total
        lo = 0
        hi = n - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cdf[mid] > u:
                hi = mid
            else:
                lo = mid + 1
        out[i] = lo
    return out

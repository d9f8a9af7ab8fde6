"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

The environment variable ``GAMMASEG_NUMBA`` selects the backend: any value
other than ``0``/``false``/``off``/``no`` (default ``1``) compiles the scalar
kernels with ``numba.njit``; otherwise the pure numpy/python fallbacks run.
Both paths compute identical results; ``benchmarks/bench_kernels.py`` compares
their speed.

Kernels:
  * exact squared Euclidean distance transform (two-pass, anisotropic cells)
  * exact transportation LP (network simplex on the dense bipartite graph)
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENV = "GAMMASEG_NUMBA"
USE_NUMBA = os.environ.get(NUMBA_ENV, "1").strip().lower() not in (
    "0",
    "false",
    "off",
    "no",
)

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

_INF = 1e300


def _jit(func):
    if USE_NUMBA:
        return njit(cache=True)(func)
    return func


# ---------------------------------------------------------------------------
# Exact Euclidean distance transform
# ---------------------------------------------------------------------------


def _edt_core(seed, sx, sy):
    """Squared distance from every cell to the nearest seed cell.

    Pass 1 sweeps each row for the in-row nearest seed, pass 2 takes the
    lower envelope of the per-row parabolas down each column.  Cells of an
    all-empty grid come back as the 1e300 sentinel.
    """
    ny, nx = seed.shape
    d1 = np.empty((ny, nx), np.float64)
    for j in range(ny):
        d = _INF
        for i in range(nx):
            if seed[j, i]:
                d = 0.0
            elif d < _INF:
                d += 1.0
            d1[j, i] = d
        d = _INF
        for i in range(nx - 1, -1, -1):
            if seed[j, i]:
                d = 0.0
            elif d < _INF:
                d += 1.0
            if d < d1[j, i]:
                d1[j, i] = d
        for i in range(nx):
            v = d1[j, i]
            if v < _INF:
                d1[j, i] = v * v * sx * sx

    if ny == 1:
        return d1

    out = np.empty((ny, nx), np.float64)
    site = np.empty(ny, np.int64)
    z = np.empty(ny + 1, np.float64)
    sy2 = sy * sy
    for i in range(nx):
        k = -1
        for q in range(ny):
            fq = d1[q, i]
            if fq >= _INF:
                continue
            if k < 0:
                k = 0
                site[0] = q
                z[0] = -_INF
                z[1] = _INF
                continue
            while True:
                vk = site[k]
                s = (fq + q * q * sy2 - (d1[vk, i] + vk * vk * sy2)) / (
                    2.0 * sy * (q - vk)
                )
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            site[k] = q
            z[k] = s
            z[k + 1] = _INF
        if k < 0:
            for q in range(ny):
                out[q, i] = _INF
            continue
        kk = 0
        for q in range(ny):
            yq = q * sy
            while z[kk + 1] < yq:
                kk += 1
            vk = site[kk]
            dy = yq - vk * sy
            out[q, i] = d1[vk, i] + dy * dy
    return out


_edt_core_jit = _jit(_edt_core)


def edt_sq_numpy(seed, sx, sy):
    """Vectorized fallback for :func:`edt_sq` (offset scan down columns)."""
    seed = np.asarray(seed, bool)
    ny, nx = seed.shape
    idx = np.arange(nx, dtype=np.float64)
    left = np.where(seed, idx[None, :], -np.inf)
    left = np.maximum.accumulate(left, axis=1)
    right = np.where(seed, idx[None, :], np.inf)
    right = np.minimum.accumulate(right[:, ::-1], axis=1)[:, ::-1]
    d = np.minimum(idx[None, :] - left, right - idx[None, :])
    d1 = np.where(np.isfinite(d), (d * sx) ** 2, _INF)
    if ny == 1:
        return d1
    out = d1.copy()
    for o in range(1, ny):
        c = (o * sy) ** 2
        np.minimum(out[o:, :], d1[:-o, :] + c, out=out[o:, :])
        np.minimum(out[:-o, :], d1[o:, :] + c, out=out[:-o, :])
    return out


def edt_sq(seed, sx, sy):
    """Exact squared Euclidean distance to the nearest seed cell.

    ``seed`` is a 2D boolean array; ``sx``/``sy`` are the lattice spacings.
    """
    seed = np.ascontiguousarray(seed, dtype=np.bool_)
    if USE_NUMBA:
        return _edt_core_jit(seed, float(sx), float(sy))
    return edt_sq_numpy(seed, float(sx), float(sy))


# ---------------------------------------------------------------------------
# Network simplex for the dense transportation problem
# ---------------------------------------------------------------------------
#
# Nodes 0..n-1 are sources, n..n+m-1 sinks.  The spanning tree is stored as
# parent pointers rooted at node 0; the flow of the arc (x, parent[x]) lives
# at the child x, and doubly linked sibling lists make subtree surgery O(1)
# per reparenting.  Entering arcs come from a block scan of reduced costs
# (most negative within the first block that has one); repeated degenerate
# pivots switch to Bland's smallest-index rule, which cannot cycle.


def _ns_attach(x, p, first_child, next_sib, prev_sib):
    nxt = first_child[p]
    first_child[p] = x
    next_sib[x] = nxt
    prev_sib[x] = -1
    if nxt >= 0:
        prev_sib[nxt] = x


def _ns_detach(x, parent, first_child, next_sib, prev_sib):
    p = parent[x]
    pr = prev_sib[x]
    nx = next_sib[x]
    if pr >= 0:
        next_sib[pr] = nx
    else:
        first_child[p] = nx
    if nx >= 0:
        prev_sib[nx] = pr


def _ns_core(a, b, C, tol, max_pivots, block, delta):
    n = a.shape[0]
    m = b.shape[0]
    N = n + m
    nm = n * m

    parent = np.full(N, -1, np.int64)
    flow = np.zeros(N, np.float64)
    pot = np.zeros(N, np.float64)
    first_child = np.full(N, -1, np.int64)
    next_sib = np.full(N, -1, np.int64)
    prev_sib = np.full(N, -1, np.int64)
    stack = np.empty(N, np.int64)
    patha = np.empty(N, np.int64)
    pathb = np.empty(N, np.int64)
    saved = np.empty(N, np.float64)

    # Perturb the marginals so every basic flow stays strictly positive:
    # each pivot then strictly lowers the cost and stalling/cycling cannot
    # happen.  The final flows are recomputed from the true marginals on
    # the optimal tree, whose optimality certificate does not involve them;
    # what the final nonnegativity clamp loses is bounded by the total
    # added mass and reported back so the caller can retry smaller.
    ap = np.empty(n, np.float64)
    bp = np.empty(m, np.float64)
    extra = 0.0
    for t in range(n):
        ap[t] = a[t] + delta * (t + 1)
        extra += delta * (t + 1)
    for t in range(m):
        bp[t] = b[t]
    bp[m - 1] += extra

    # Northwest-corner start: each step adds one node, so the basic cells
    # already form a spanning tree rooted at source 0.
    i = 0
    j = 0
    ra = ap[0]
    rb = bp[0]
    child = n
    parent[child] = 0
    _ns_attach(child, 0, first_child, next_sib, prev_sib)
    while True:
        theta = ra if ra < rb else rb
        if theta < 0.0:
            theta = 0.0
        flow[child] = theta
        ra -= theta
        rb -= theta
        if i == n - 1 and j == m - 1:
            break
        if (ra <= rb and i < n - 1) or j == m - 1:
            i += 1
            ra = ap[i]
            child = i
            parent[child] = n + j
            _ns_attach(child, n + j, first_child, next_sib, prev_sib)
        else:
            j += 1
            rb = bp[j]
            child = n + j
            parent[child] = i
            _ns_attach(child, i, first_child, next_sib, prev_sib)

    # potentials by DFS from the root
    pot[0] = 0.0
    top = 0
    stack[0] = 0
    while top >= 0:
        x = stack[top]
        top -= 1
        c = first_child[x]
        while c >= 0:
            if c < n:
                pot[c] = C[c, x - n] - pot[x]
            else:
                pot[c] = C[x, c - n] - pot[x]
            top += 1
            stack[top] = c
            c = next_sib[c]

    cursor = 0
    degen = 0
    bland = False
    pivots = 0
    status = 0
    while True:
        best_r = -tol
        best_k = -1
        if bland:
            for k in range(nm):
                ii = k // m
                jj = k - ii * m
                r = C[ii, jj] - pot[ii] - pot[n + jj]
                if r < -tol:
                    best_k = k
                    break
        else:
            scanned = 0
            while scanned < nm:
                for t in range(block):
                    k = (cursor + t) % nm
                    ii = k // m
                    jj = k - ii * m
                    r = C[ii, jj] - pot[ii] - pot[n + jj]
                    if r < best_r:
                        best_r = r
                        best_k = k
                cursor = (cursor + block) % nm
                scanned += block
                if best_k >= 0:
                    break
        if best_k < 0:
            break
        pivots += 1
        if pivots > max_pivots:
            status = 1
            break
        ei = best_k // m
        ej = n + (best_k - ei * m)

        la = 0
        x = ei
        while x >= 0:
            patha[la] = x
            la += 1
            x = parent[x]
        lb = 0
        x = ej
        while x >= 0:
            pathb[lb] = x
            lb += 1
            x = parent[x]
        s = 1
        lmin = la if la < lb else lb
        while s < lmin and patha[la - s - 1] == pathb[lb - s - 1]:
            s += 1

        # arcs that lose flow: sources below the meet on the ei side,
        # sinks below it on the ej side
        theta = _INF
        leave = -1
        leave_side = 0
        for t in range(la - s):
            x = patha[t]
            if x < n:
                f = flow[x]
                if f < theta or (f == theta and x < leave):
                    theta = f
                    leave = x
                    leave_side = 0
        for t in range(lb - s):
            x = pathb[t]
            if x >= n:
                f = flow[x]
                if f < theta or (f == theta and x < leave):
                    theta = f
                    leave = x
                    leave_side = 1
        if leave < 0:
            status = 2
            break

        for t in range(la - s):
            x = patha[t]
            if x < n:
                flow[x] -= theta
            else:
                flow[x] += theta
        for t in range(lb - s):
            x = pathb[t]
            if x >= n:
                flow[x] -= theta
            else:
                flow[x] += theta

        if theta <= 0.0:
            degen += 1
            if degen > N:
                bland = True
        else:
            degen = 0
            bland = False

        # cut the leaving arc and re-hang the loose subtree through the
        # entering arc, reversing parents along the way
        if leave_side == 0:
            path = patha
            head = ei
            other = ej
        else:
            path = pathb
            head = ej
            other = ei
        tl = 0
        while path[tl] != leave:
            tl += 1
        for t in range(tl + 1):
            saved[t] = flow[path[t]]
        _ns_detach(head, parent, first_child, next_sib, prev_sib)
        parent[head] = other
        _ns_attach(head, other, first_child, next_sib, prev_sib)
        flow[head] = theta
        for t in range(1, tl + 1):
            x = path[t]
            _ns_detach(x, parent, first_child, next_sib, prev_sib)
            parent[x] = path[t - 1]
            _ns_attach(x, path[t - 1], first_child, next_sib, prev_sib)
            flow[x] = saved[t - 1]

        pot[0] = 0.0
        top = 0
        stack[0] = 0
        while top >= 0:
            x = stack[top]
            top -= 1
            c = first_child[x]
            while c >= 0:
                if c < n:
                    pot[c] = C[c, x - n] - pot[x]
                else:
                    pot[c] = C[x, c - n] - pot[x]
                top += 1
                stack[top] = c
                c = next_sib[c]

    # exact flows for the unperturbed marginals on the optimal tree:
    # each arc carries the net supply of the subtree hanging from it
    order = np.empty(N, np.int64)
    net = np.empty(N, np.float64)
    for x in range(N):
        net[x] = a[x] if x < n else -b[x - n]
    top = 0
    stack[0] = 0
    cnt = 0
    while top >= 0:
        x = stack[top]
        top -= 1
        order[cnt] = x
        cnt += 1
        c = first_child[x]
        while c >= 0:
            top += 1
            stack[top] = c
            c = next_sib[c]
    negloss = 0.0
    for t in range(N - 1, 0, -1):
        x = order[t]
        f = net[x] if x < n else -net[x]
        if f < 0.0:
            negloss -= f
            f = 0.0
        flow[x] = f
        net[parent[x]] += net[x]

    out_i = np.empty(N - 1, np.int64)
    out_j = np.empty(N - 1, np.int64)
    out_w = np.empty(N - 1, np.float64)
    cnt = 0
    total = 0.0
    for x in range(N):
        p = parent[x]
        if p < 0:
            continue
        w = flow[x]
        if w <= 0.0:
            continue
        if x < n:
            si = x
            sj = p - n
        else:
            si = p
            sj = x - n
        out_i[cnt] = si
        out_j[cnt] = sj
        out_w[cnt] = w
        cnt += 1
        total += w * C[si, sj]
    return out_i[:cnt], out_j[:cnt], out_w[:cnt], total, status, pivots, negloss


if USE_NUMBA:
    _ns_attach = njit(cache=True)(_ns_attach)
    _ns_detach = njit(cache=True)(_ns_detach)
    _ns_core_jit = njit(cache=True)(_ns_core)
else:
    _ns_core_jit = _ns_core


def _ns_solve(core, a, b, C, max_pivots):
    n, m = C.shape
    if a.shape[0] != n or b.shape[0] != m:
        raise ValueError("marginal sizes do not match the cost matrix")
    if max_pivots is None:
        max_pivots = 100 * (n + m) + 10000
    block = max(64, int(np.sqrt(n * m)))
    tol = 1e-11 * max(1.0, float(np.max(np.abs(C))) if C.size else 1.0)
    # fast perturbation first; if the final clamp would lose visible mass,
    # redo with one small enough to keep marginals under 1e-9
    for delta in (1e-10 / n, 1e-9 / (n * (n + 1.0))):
        rows, cols, w, total, status, pivots, negloss = core(
            a, b, C, tol, int(max_pivots), block, delta
        )
        if status == 1:
            raise RuntimeError(
                f"network simplex hit the pivot cap ({max_pivots}) on a {n}x{m} problem"
            )
        if status != 0:
            raise RuntimeError("network simplex lost the basis tree (internal error)")
        if negloss <= 2.5e-10:
            return rows, cols, w, total, pivots
    return rows, cols, w, total, pivots


def network_simplex(a, b, C, max_pivots=None):
    """Exactly solve min <C, X> s.t. X 1 = a, X^T 1 = b, X >= 0.

    Returns ``(rows, cols, weights, total_cost, pivots)`` for the optimal
    basic solution.  Raises ``RuntimeError`` when the pivot cap is hit.
    """
    a = np.ascontiguousarray(a, np.float64)
    b = np.ascontiguousarray(b, np.float64)
    C = np.ascontiguousarray(C, np.float64)
    core = _ns_core_jit if USE_NUMBA else _ns_core
    return _ns_solve(core, a, b, C, max_pivots)


def network_simplex_python(a, b, C, max_pivots=None):
    """Run the un-jitted network simplex (benchmark / fallback reference)."""
    a = np.ascontiguousarray(a, np.float64)
    b = np.ascontiguousarray(b, np.float64)
    C = np.ascontiguousarray(C, np.float64)
    core = _ns_core_jit.py_func if USE_NUMBA else _ns_core
    return _ns_solve(core, a, b, C, max_pivots)

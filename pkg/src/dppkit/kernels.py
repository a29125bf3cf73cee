"""Inner loops of the projective samplers.

Each sampler is written once, in numba-compatible numpy, and exposed through
``_backend.Kernel`` so the same code runs jitted or interpreted. Uniform
variates are generated by the caller and passed in (one per categorical
draw), which keeps both backends on an identical random stream.

Return convention: ``(status, step)`` where ``status`` is one of the ``OK``,
``NEGATIVE``, ``PIVOT``, ``EMPTY`` codes below and ``step`` is the 0-based
iteration at which sampling stopped.
"""

import numpy as np

from ._backend import kernel, overload, register_jitable

OK = 0
NEGATIVE = 1  # an unsampled p(i) fell below -tau_clamp
PIVOT = 2  # normalization denominator below tau_breakdown
EMPTY = 3  # all sanitized weights are zero

CLAMP_RTOL = 1e-8
BREAKDOWN_RTOL = 1e-10


def sub_scaled(out, a, c, b):
    """``out = a - c * b`` for 1-D arrays that do not overlap."""
    np.subtract(a, c * b, out=out)


@overload(sub_scaled, jit_options={"nogil": True})
def _sub_scaled_jit(out, a, c, b):
    # explicit loop: no temporaries in the jitted build
    def impl(out, a, c, b):
        for i in range(out.shape[0]):
            out[i] = a[i] - c * b[i]

    return impl


@register_jitable
def sanitize_into(p, taken, tau, out):
    """Copy ``p`` into ``out`` with sampled entries and small negatives zeroed."""
    out[:] = p
    bad = (p < -tau) & ~taken
    out[out < 0.0] = 0.0
    out[taken] = 0.0
    if np.any(bad):
        return NEGATIVE
    return OK


@register_jitable
def inverse_cdf(p, u):
    """Index i with probability ``p[i] / sum(p)`` from one uniform ``u``; -1 if sum <= 0."""
    c = np.cumsum(p)
    total = c[-1]
    if not total > 0.0:
        return -1
    i = np.searchsorted(c, u * total, side="right")
    if i >= p.shape[0]:
        i = p.shape[0] - 1
        while p[i] <= 0.0:
            i -= 1
    return i


@register_jitable
def _efficient_draw(v, u, indices, sums, trace, record):
    n_items, k = v.shape
    p = np.sum(v * v, axis=1)
    pmax = p.max()
    tau_clamp = CLAMP_RTOL * pmax
    tau_break = BREAKDOWN_RTOL * pmax
    f_rows = np.zeros((k, k))
    taken = np.zeros(n_items, dtype=np.bool_)
    q = np.empty(n_items)
    for n in range(k):
        sums[n] = p.sum()
        if record:
            trace[n, :] = p
        if sanitize_into(p, taken, tau_clamp, q) != OK:
            return NEGATIVE, n
        s = inverse_cdf(q, u[n])
        if s < 0:
            return EMPTY, n
        indices[n] = s
        taken[s] = True
        ys = v[s].copy()
        # f_n = y_s - F F^T y_s, as two matrix-vector products
        f = ys - f_rows[:n].T @ (f_rows[:n] @ ys)
        denom = f @ ys
        if denom <= tau_break:
            return PIVOT, n
        f = f / np.sqrt(denom)
        f_rows[n, :] = f
        c = v @ f
        p = p - c * c
    return OK, k


@register_jitable
def _dual_draw(psi_t, c_tilde, p0, u, indices, sums, trace, record):
    n_items, d = psi_t.shape
    k = u.shape[0]
    p = p0.copy()
    pmax = p.max()
    tau_clamp = CLAMP_RTOL * pmax
    tau_break = BREAKDOWN_RTOL * pmax
    f_rows = np.zeros((k, d))
    # g_l = C~ f_l, so that f_l^T C~ psi_i = g_l . psi_i
    g_rows = np.zeros((k, d))
    taken = np.zeros(n_items, dtype=np.bool_)
    q = np.empty(n_items)
    for n in range(k):
        sums[n] = p.sum()
        if record:
            trace[n, :] = p
        if sanitize_into(p, taken, tau_clamp, q) != OK:
            return NEGATIVE, n
        s = inverse_cdf(q, u[n])
        if s < 0:
            return EMPTY, n
        indices[n] = s
        taken[s] = True
        psi_s = psi_t[s].copy()
        f = psi_s - f_rows[:n].T @ (g_rows[:n] @ psi_s)
        g = c_tilde @ f
        denom = g @ psi_s
        if denom <= tau_break:
            return PIVOT, n
        scale = 1.0 / np.sqrt(denom)
        f_rows[n, :] = f * scale
        g_rows[n, :] = g * scale
        c = psi_t @ g_rows[n]
        p = p - c * c
    return OK, k


@register_jitable
def _schur_draw(v, u, indices, sums, trace, record):
    n_items, k = v.shape
    p0 = np.sum(v * v, axis=1)
    pmax = p0.max()
    tau_clamp = CLAMP_RTOL * pmax
    tau_break = BREAKDOWN_RTOL * pmax
    vt = np.ascontiguousarray(v.T)
    taken = np.zeros(n_items, dtype=np.bool_)
    q = np.empty(n_items)
    p = p0.copy()
    for n in range(k):
        sums[n] = p.sum()
        if record:
            trace[n, :] = p
        if sanitize_into(p, taken, tau_clamp, q) != OK:
            return NEGATIVE, n
        s = inverse_cdf(q, u[n])
        if s < 0:
            return EMPTY, n
        if p[s] <= tau_break:
            return PIVOT, n
        indices[n] = s
        taken[s] = True
        if n == k - 1:
            break
        vs = np.empty((n + 1, k))
        for j in range(n + 1):
            vs[j, :] = v[indices[j]]
        p_s = vs @ vs.T
        p_si = vs @ vt
        x = np.linalg.solve(p_s, p_si)
        p = p0 - np.sum(p_si * x, axis=0)
    return OK, k


@register_jitable
def orthonormalize_rows(w):
    """Thin QR of ``w.T`` by modified Gram-Schmidt, applied twice; rows of the result are Q^T."""
    m = w.shape[0]
    q = w.copy()
    for a in range(m):
        r = q[a]
        for _ in range(2):
            for b in range(a):
                qb = q[b]
                r -= np.dot(qb, r) * qb
        r /= np.sqrt(np.dot(r, r))
    return q


@register_jitable
def _reference_draw(v, u, indices, sums, trace, record):
    n_items, k = v.shape
    # basis vectors stored as rows so each one is contiguous
    cur = np.ascontiguousarray(v.T)
    pmax = np.sum(v * v, axis=1).max()
    tau_clamp = CLAMP_RTOL * pmax
    tau_break = BREAKDOWN_RTOL * pmax
    taken = np.zeros(n_items, dtype=np.bool_)
    q = np.empty(n_items)
    for n in range(k):
        p = np.sum(cur * cur, axis=0)
        sums[n] = p.sum()
        if record:
            trace[n, :] = p
        if sanitize_into(p, taken, tau_clamp, q) != OK:
            return NEGATIVE, n
        s = inverse_cdf(q, u[n])
        if s < 0:
            return EMPTY, n
        if p[s] <= tau_break:
            return PIVOT, n
        indices[n] = s
        taken[s] = True
        m = cur.shape[0]
        if m == 1:
            break
        col = cur[:, s].copy()
        j = np.argmax(np.abs(col))
        pivot = cur[j].copy()
        # project onto the complement of delta_s: eliminate coordinate s with the
        # vector carrying its largest entry, drop that vector, re-orthonormalize
        w = np.empty((m - 1, n_items))
        t_out = 0
        for t in range(m):
            if t == j:
                continue
            sub_scaled(w[t_out], cur[t], col[t] / col[j], pivot)
            w[t_out, s] = 0.0
            t_out += 1
        cur = orthonormalize_rows(w)
    return OK, k


@kernel
def efficient_single(v, u, record):
    k = u.shape[0]
    indices = np.full(k, -1, dtype=np.int64)
    sums = np.zeros(k)
    trace = np.zeros((k if record else 1, v.shape[0]))
    status, step = _efficient_draw(v, u, indices, sums, trace, record)
    return status, step, indices, sums, trace


@kernel
def efficient_batch(v, uniforms):
    n_draws, k = uniforms.shape
    indices = np.full((n_draws, k), -1, dtype=np.int64)
    sums = np.zeros((n_draws, k))
    trace = np.zeros((1, v.shape[0]))
    for r in range(n_draws):
        status, step = _efficient_draw(v, uniforms[r], indices[r], sums[r], trace, False)
        if status != OK:
            return status, r, step, indices, sums
    return OK, n_draws, k, indices, sums


@kernel
def schur_single(v, u, record):
    k = u.shape[0]
    indices = np.full(k, -1, dtype=np.int64)
    sums = np.zeros(k)
    trace = np.zeros((k if record else 1, v.shape[0]))
    status, step = _schur_draw(v, u, indices, sums, trace, record)
    return status, step, indices, sums, trace


@kernel
def schur_batch(v, uniforms):
    n_draws, k = uniforms.shape
    indices = np.full((n_draws, k), -1, dtype=np.int64)
    sums = np.zeros((n_draws, k))
    trace = np.zeros((1, v.shape[0]))
    for r in range(n_draws):
        status, step = _schur_draw(v, uniforms[r], indices[r], sums[r], trace, False)
        if status != OK:
            return status, r, step, indices, sums
    return OK, n_draws, k, indices, sums


@kernel
def reference_single(v, u, record):
    k = u.shape[0]
    indices = np.full(k, -1, dtype=np.int64)
    sums = np.zeros(k)
    trace = np.zeros((k if record else 1, v.shape[0]))
    status, step = _reference_draw(v, u, indices, sums, trace, record)
    return status, step, indices, sums, trace


@kernel
def reference_batch(v, uniforms):
    n_draws, k = uniforms.shape
    indices = np.full((n_draws, k), -1, dtype=np.int64)
    sums = np.zeros((n_draws, k))
    trace = np.zeros((1, v.shape[0]))
    for r in range(n_draws):
        status, step = _reference_draw(v, uniforms[r], indices[r], sums[r], trace, False)
        if status != OK:
            return status, r, step, indices, sums
    return OK, n_draws, k, indices, sums


@kernel
def dual_single(psi_t, c_tilde, p0, u, record):
    k = u.shape[0]
    indices = np.full(k, -1, dtype=np.int64)
    sums = np.zeros(k)
    trace = np.zeros((k if record else 1, psi_t.shape[0]))
    status, step = _dual_draw(psi_t, c_tilde, p0, u, indices, sums, trace, record)
    return status, step, indices, sums, trace


@kernel
def dual_batch(psi_t, c_tilde, p0, uniforms):
    n_draws, k = uniforms.shape
    indices = np.full((n_draws, k), -1, dtype=np.int64)
    sums = np.zeros((n_draws, k))
    trace = np.zeros((1, psi_t.shape[0]))
    for r in range(n_draws):
        status, step = _dual_draw(psi_t, c_tilde, p0, uniforms[r], indices[r], sums[r], trace, False)
        if status != OK:
            return status, r, step, indices, sums
    return OK, n_draws, k, indices, sums


@kernel
def categorical(p, u):
    return inverse_cdf(p, u)


@kernel
def sanitize(p, taken, tau):
    out = np.empty_like(p)
    status = sanitize_into(p, taken, tau, out)
    return status, out

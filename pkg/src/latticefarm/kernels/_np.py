"""Batched pure-numpy kernels.

Same signatures and arithmetic order as ``_nb``; loops over sites become
array operations over a leading batch axis. 3x3 products are written out
entry by entry so no BLAS call can reorder the sums.
"""

import numpy as np

NAME = "numpy"

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWOPI = 2.0 * np.pi

SMALL_ALPHA = 1.0
ERR_OK = 0
ERR_NONCONVERGENCE = 1
ERR_DEGENERATE = 2
DEPENDENCE_TOL = 1e-10

SUBGROUPS = np.array([[0, 1], [1, 2], [0, 2]], dtype=np.int64)


def _u32(x):
    return np.asarray(x).astype(np.uint64) & _MASK32


def philox4x32(c0, c1, c2, c3, k0, k1):
    c0, c1, c2, c3 = _u32(c0), _u32(c1), _u32(c2), _u32(c3)
    k0, k1 = _u32(k0), _u32(k1)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (p1 >> _S32) ^ c1 ^ k0, p1 & _MASK32, (p0 >> _S32) ^ c3 ^ k1, p0 & _MASK32
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def uniform_pair(site, mu, sweep, block, k0, k1):
    o0, o1, o2, o3 = philox4x32(site, mu, sweep, block, k0, k1)
    x = (o0 << _S32) | o1
    y = (o2 << _S32) | o3
    return (
        ((x >> _S11).astype(np.float64) + 0.5) * _TWO_M53,
        ((y >> _S11).astype(np.float64) + 0.5) * _TWO_M53,
    )


def su2_draw(alpha, site, mu, sweep, block, k0, k1, max_trials):
    """Batched sampler; ``alpha``, ``site`` and ``block`` are equal-length arrays.

    Returns (a (n, 4), next_block, trials, err).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    n = alpha.shape[0]
    site = np.broadcast_to(np.asarray(site, dtype=np.int64), (n,))
    mu = np.broadcast_to(np.asarray(mu, dtype=np.int64), (n,))
    block = np.array(np.broadcast_to(np.asarray(block, dtype=np.int64), (n,)))
    a0 = np.ones(n)
    done = np.zeros(n, dtype=bool)
    small = alpha < SMALL_ALPHA
    trials = 0
    rounds = 0
    while not done.all():
        if rounds >= max_trials:
            return np.zeros((n, 4)), block, trials, ERR_NONCONVERGENCE
        rounds += 1
        ps = np.flatnonzero(~done & small)
        if ps.size:
            u1, u2 = uniform_pair(site[ps], mu[ps], sweep, block[ps], k0, k1)
            block[ps] += 1
            trials += ps.size
            x = 2.0 * u1 - 1.0
            ok = u2 < np.sqrt(1.0 - x * x) * np.exp(alpha[ps] * (x - 1.0))
            a0[ps[ok]] = x[ok]
            done[ps[ok]] = True
        pl = np.flatnonzero(~done & ~small)
        if pl.size:
            u1, u2 = uniform_pair(site[pl], mu[pl], sweep, block[pl], k0, k1)
            u3, u4 = uniform_pair(site[pl], mu[pl], sweep, block[pl] + 1, k0, k1)
            block[pl] += 2
            trials += pl.size
            c = np.cos(_TWOPI * u2)
            delta = -(np.log(u1) + c * c * np.log(u3)) / alpha[pl]
            ok = u4 * u4 <= 1.0 - 0.5 * delta
            a0[pl[ok]] = 1.0 - delta[ok]
            done[pl[ok]] = True
    v1, v2 = uniform_pair(site, mu, sweep, block, k0, k1)
    block += 1
    r = np.sqrt(np.maximum(0.0, 1.0 - a0 * a0))
    cost = 2.0 * v1 - 1.0
    sint = np.sqrt(np.maximum(0.0, 1.0 - cost * cost))
    phi = _TWOPI * v2
    a = np.stack([a0, r * sint * np.cos(phi), r * sint * np.sin(phi), r * cost], axis=1)
    return a, block, trials, ERR_OK


def su2_draw_many(alpha, sites, mu, sweep, block0, k0, k1, max_trials, out):
    a, _, trials, err = su2_draw(alpha, sites, mu, sweep, block0, k0, k1, max_trials)
    if err != ERR_OK:
        return -1
    out[:] = a
    return trials


def _gauss_pair(site, mu, sweep, block, k0, k1):
    u1, u2 = uniform_pair(site, mu, sweep, block, k0, k1)
    rad = np.sqrt(-2.0 * np.log(u1))
    return rad * np.cos(_TWOPI * u2), rad * np.sin(_TWOPI * u2)


def _lmul_su2(m, i, j, c):
    """m <- embed(c) @ m for a batch m (n, 3, 3) and c (n, 4)."""
    r00 = (c[:, 0] + 1j * c[:, 3])[:, None]
    r01 = (c[:, 2] + 1j * c[:, 1])[:, None]
    r10 = (-c[:, 2] + 1j * c[:, 1])[:, None]
    r11 = (c[:, 0] - 1j * c[:, 3])[:, None]
    mi = m[:, i, :].copy()
    mj = m[:, j, :].copy()
    m[:, i, :] = r00 * mi + r01 * mj
    m[:, j, :] = r10 * mi + r11 * mj


def random_su3_many(sites, mus, sweep, block0, k0, k1, out):
    n = sites.shape[0]
    g = np.empty((n, 12))
    for p in range(6):
        z1, z2 = _gauss_pair(sites, mus, sweep, block0 + p, k0, k1)
        g[:, 2 * p] = z1
        g[:, 2 * p + 1] = z2
    m = np.zeros((n, 3, 3), dtype=np.complex128)
    m[:, 0, 0] = m[:, 1, 1] = m[:, 2, 2] = 1.0
    for s in range(2, -1, -1):
        q = g[:, 4 * s:4 * s + 4]
        nrm = np.sqrt(q[:, 0] * q[:, 0] + q[:, 1] * q[:, 1] + q[:, 2] * q[:, 2] + q[:, 3] * q[:, 3])
        _lmul_su2(m, SUBGROUPS[s, 0], SUBGROUPS[s, 1], q / nrm[:, None])
    out[:] = m


def _load(links, sites, d, dag):
    u = links[sites, d]
    return np.conj(np.swapaxes(u, -1, -2)) if dag else u.copy()


def matmul(a, b):
    """Batched 3x3 product with explicit, fixed summation order."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.complex128)
    for i in range(3):
        for j in range(3):
            s = a[..., i, 0] * b[..., 0, j]
            s += a[..., i, 1] * b[..., 1, j]
            s += a[..., i, 2] * b[..., 2, j]
            out[..., i, j] = s
    return out


def _path_product(links, base, foff, dirs, dags, length):
    prod = _load(links, base + foff[0], dirs[0], dags[0])
    for s in range(1, length):
        prod = matmul(prod, _load(links, base + foff[s], dirs[s], dags[s]))
    return prod


def staples(links, idx, foff, dirs, dags, lens, nplaq, c0, c1, out):
    npaths = foff.shape[0] if c1 != 0.0 else nplaq
    n = idx.shape[0]
    acc_p = np.zeros((n, 3, 3), dtype=np.complex128)
    acc_r = np.zeros((n, 3, 3), dtype=np.complex128)
    for p in range(npaths):
        prod = _path_product(links, idx, foff[p], dirs[p], dags[p], lens[p])
        if p < nplaq:
            acc_p += prod
        else:
            acc_r += prod
    out[:] = c0 * acc_p + c1 * acc_r


def _mul_dag(a, b):
    return matmul(a, np.conj(np.swapaxes(b, -1, -2)))


def _project(w, i, j):
    return np.stack([
        w[:, i, i].real + w[:, j, j].real,
        -w[:, i, j].imag - w[:, j, i].imag,
        w[:, j, i].real - w[:, i, j].real,
        w[:, j, j].imag - w[:, i, i].imag,
    ], axis=1)


def _qmul(x, y):
    x0, x1, x2, x3 = x.T
    y0, y1, y2, y3 = y.T
    return np.stack([
        x0 * y0 - (x1 * y1 + x2 * y2 + x3 * y3),
        x0 * y1 + y0 * x1 - (x2 * y3 - x3 * y2),
        x0 * y2 + y0 * x2 - (x3 * y1 - x1 * y3),
        x0 * y3 + y0 * x3 - (x1 * y2 - x2 * y1),
    ], axis=1)


def heatbath_su3(u, s, beta, site, mu, sweep, block, k0, k1, max_trials):
    """Batched heatbath hit on u (n, 3, 3) in place. Returns (block, trials, err)."""
    w = _mul_dag(u, s)
    beta_eff = beta / 3.0
    trials = 0
    for sg in range(3):
        i, j = SUBGROUPS[sg]
        b = _project(w, i, j)
        k = np.sqrt(b[:, 0] * b[:, 0] + b[:, 1] * b[:, 1] + b[:, 2] * b[:, 2] + b[:, 3] * b[:, 3])
        live = k > 1e-30
        bhat = np.zeros_like(b)
        bhat[:, 0] = 1.0
        bhat[live] = b[live] / k[live, None]
        k = np.where(live, k, 0.0)
        x, block, t, err = su2_draw(beta_eff * k, site, mu, sweep, block, k0, k1, max_trials)
        trials += t
        if err != ERR_OK:
            return block, trials, err
        c = _qmul(x, bhat)
        _lmul_su2(u, i, j, c)
        _lmul_su2(w, i, j, c)
    return block, trials, ERR_OK


def overrelax_su3(u, s):
    w = _mul_dag(u, s)
    skipped = 0
    for sg in range(3):
        i, j = SUBGROUPS[sg]
        b = _project(w, i, j)
        k = np.sqrt(b[:, 0] * b[:, 0] + b[:, 1] * b[:, 1] + b[:, 2] * b[:, 2] + b[:, 3] * b[:, 3])
        live = ~(k < 1e-30)
        skipped += int((~live).sum())
        if not live.any():
            continue
        bh = b[live] / k[live, None]
        c = np.stack([
            bh[:, 0] * bh[:, 0] - (bh[:, 1] * bh[:, 1] + bh[:, 2] * bh[:, 2] + bh[:, 3] * bh[:, 3]),
            2.0 * bh[:, 0] * bh[:, 1], 2.0 * bh[:, 0] * bh[:, 2], 2.0 * bh[:, 0] * bh[:, 3],
        ], axis=1)
        ul, wl = u[live], w[live]
        _lmul_su2(ul, i, j, c)
        _lmul_su2(wl, i, j, c)
        u[live], w[live] = ul, wl
    return skipped


def update_links(links, idx, gsite, mu, sweep, k0, k1, beta, c0, c1, n_hb, n_or,
                 foff, dirs, dags, lens, nplaq, max_trials, stats):
    n = idx.shape[0]
    s = np.empty((n, 3, 3), dtype=np.complex128)
    staples(links, idx, foff, dirs, dags, lens, nplaq, c0, c1, s)
    u = links[idx, mu].copy()
    block = np.zeros(n, dtype=np.int64)
    for _ in range(n_hb):
        block, t, err = heatbath_su3(u, s, beta, gsite, mu, sweep, block, k0, k1, max_trials)
        stats[0] += t
        stats[1] += 3 * n
        if err != ERR_OK:
            return err
    for _ in range(n_or):
        stats[2] += overrelax_su3(u, s)
    links[idx, mu] = u
    return ERR_OK


def loop_sums(links, idx, foff, dirs, dags, lens, nloops, nplaq, out):
    vals = np.empty((nloops, idx.shape[0]))
    for p in range(nloops):
        prod = _path_product(links, idx, foff[p], dirs[p], dags[p], lens[p])
        vals[p] = (prod[:, 0, 0].real + prod[:, 1, 1].real + prod[:, 2, 2].real) / 3.0
    # cumsum is sequential (sum() is pairwise): sites outer, loops inner, as in _nb
    out[0] = np.cumsum(vals[:nplaq].T.ravel())[-1] if idx.size else 0.0
    out[1] = np.cumsum(vals[nplaq:].T.ravel())[-1] if idx.size and nloops > nplaq else 0.0


def loop_values(links, idx, foff, dirs, dags, lens, out):
    prod = _path_product(links, idx, foff, dirs, dags, lens)
    out[:] = (prod[:, 0, 0].real + prod[:, 1, 1].real + prod[:, 2, 2].real) / 3.0


def reunitarize_many(mats):
    r0 = mats[:, 0, :]
    n0 = np.sqrt((r0.real * r0.real + r0.imag * r0.imag).sum(axis=1))
    if not np.all(n0 > 1e-30):
        return ERR_DEGENERATE
    r0 = r0 / n0[:, None]
    r1 = mats[:, 1, :]
    orig = np.sqrt((r1.real * r1.real + r1.imag * r1.imag).sum(axis=1))
    dot = np.conj(r0[:, 0]) * r1[:, 0] + np.conj(r0[:, 1]) * r1[:, 1] + np.conj(r0[:, 2]) * r1[:, 2]
    r1 = r1 - dot[:, None] * r0
    n1 = np.sqrt((r1.real * r1.real + r1.imag * r1.imag).sum(axis=1))
    if not np.all(n1 > np.maximum(1e-30, DEPENDENCE_TOL * orig)):
        return ERR_DEGENERATE
    r1 = r1 / n1[:, None]
    mats[:, 0, :] = r0
    mats[:, 1, :] = r1
    mats[:, 2, 0] = np.conj(r0[:, 1] * r1[:, 2] - r0[:, 2] * r1[:, 1])
    mats[:, 2, 1] = np.conj(r0[:, 2] * r1[:, 0] - r0[:, 0] * r1[:, 2])
    mats[:, 2, 2] = np.conj(r0[:, 0] * r1[:, 1] - r0[:, 1] * r1[:, 0])
    return ERR_OK


def lu_factor(a, piv):
    n = a.shape[0]
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        piv[k] = p
        if a[p, k] == 0.0:
            return k + 1
        if p != k:
            a[[k, p], :] = a[[p, k], :]
        a[k + 1:, k] *= 1.0 / a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return 0


def lu_solve(lu, piv, b):
    n = lu.shape[0]
    for k in range(n):
        p = piv[k]
        if p != k:
            b[k], b[p] = b[p], b[k]
    for r in range(1, n):
        b[r] -= lu[r, :r] @ b[:r]
    for r in range(n - 1, -1, -1):
        b[r] = (b[r] - lu[r, r + 1:] @ b[r + 1:]) / lu[r, r]


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data):
    h = _FNV_OFFSET
    for byte in bytes(memoryview(np.ascontiguousarray(data, dtype=np.uint8))):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return np.uint64(h)


def heatbath_one(u, s, beta, site, mu, sweep, block, k0, k1, max_trials):
    out = u.reshape(1, 3, 3).copy()
    block, trials, err = heatbath_su3(out, s.reshape(1, 3, 3), beta, np.array([site]), mu, sweep,
                                      np.array([block]), k0, k1, max_trials)
    return out[0], int(block[0]), trials, err


def overrelax_one(u, s):
    out = u.reshape(1, 3, 3).copy()
    skipped = overrelax_su3(out, s.reshape(1, 3, 3))
    return out[0], skipped

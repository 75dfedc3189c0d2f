"""Scalar numba kernels.

Every function here has a batched twin in ``_np`` with the same signature and
the same arithmetic order. Matrices are complex128 (3, 3); the gauge field is
passed as its flat padded view of shape (nsites_padded, 4, 3, 3).
"""

import math

import numpy as np

from .._accel import njit

NAME = "numba"

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWOPI = 2.0 * math.pi

SMALL_ALPHA = 1.0
ERR_OK = 0
ERR_NONCONVERGENCE = 1
ERR_DEGENERATE = 2
# row 1 counts as dependent on row 0 below this fraction of its norm
DEPENDENCE_TOL = 1e-10

# (i, j) rows/cols of the three SU(2) subgroups
SUBGROUPS = np.array([[0, 1], [1, 2], [0, 2]], dtype=np.int64)


@njit
def philox4x32(c0, c1, c2, c3, k0, k1):
    c0 = np.uint64(c0) & _MASK32
    c1 = np.uint64(c1) & _MASK32
    c2 = np.uint64(c2) & _MASK32
    c3 = np.uint64(c3) & _MASK32
    k0 = np.uint64(k0) & _MASK32
    k1 = np.uint64(k1) & _MASK32
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = (p1 >> _S32) ^ c1 ^ k0
        n1 = p1 & _MASK32
        n2 = (p0 >> _S32) ^ c3 ^ k1
        n3 = p0 & _MASK32
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


@njit
def uniform_pair(site, mu, sweep, block, k0, k1):
    """Two doubles in (0, 1) from one Philox block."""
    o0, o1, o2, o3 = philox4x32(site, mu, sweep, block, k0, k1)
    x = (o0 << _S32) | o1
    y = (o2 << _S32) | o3
    return (float(x >> _S11) + 0.5) * _TWO_M53, (float(y >> _S11) + 0.5) * _TWO_M53


@njit
def su2_draw(alpha, site, mu, sweep, block, k0, k1, max_trials):
    """Sample a with a0 ~ sqrt(1-a0^2) exp(alpha a0), vector part isotropic.

    Returns (a0, a1, a2, a3, next_block, trials, err).
    """
    trials = 0
    a0 = 1.0
    if alpha < SMALL_ALPHA:
        while True:
            if trials >= max_trials:
                return 1.0, 0.0, 0.0, 0.0, block, trials, ERR_NONCONVERGENCE
            u1, u2 = uniform_pair(site, mu, sweep, block, k0, k1)
            block += 1
            trials += 1
            a0 = 2.0 * u1 - 1.0
            if u2 < math.sqrt(1.0 - a0 * a0) * math.exp(alpha * (a0 - 1.0)):
                break
    else:
        while True:
            if trials >= max_trials:
                return 1.0, 0.0, 0.0, 0.0, block, trials, ERR_NONCONVERGENCE
            u1, u2 = uniform_pair(site, mu, sweep, block, k0, k1)
            u3, u4 = uniform_pair(site, mu, sweep, block + 1, k0, k1)
            block += 2
            trials += 1
            c = math.cos(_TWOPI * u2)
            delta = -(math.log(u1) + c * c * math.log(u3)) / alpha
            if u4 * u4 <= 1.0 - 0.5 * delta:
                a0 = 1.0 - delta
                break
    v1, v2 = uniform_pair(site, mu, sweep, block, k0, k1)
    block += 1
    r = math.sqrt(max(0.0, 1.0 - a0 * a0))
    cost = 2.0 * v1 - 1.0
    sint = math.sqrt(max(0.0, 1.0 - cost * cost))
    phi = _TWOPI * v2
    return a0, r * sint * math.cos(phi), r * sint * math.sin(phi), r * cost, block, trials, ERR_OK


@njit
def su2_draw_many(alpha, sites, mu, sweep, block0, k0, k1, max_trials, out):
    """Vector of independent draws, one stream per entry of ``sites``."""
    total = 0
    for n in range(sites.shape[0]):
        a0, a1, a2, a3, _, t, err = su2_draw(alpha[n], sites[n], mu, sweep, block0, k0, k1, max_trials)
        if err != ERR_OK:
            return -1
        out[n, 0] = a0
        out[n, 1] = a1
        out[n, 2] = a2
        out[n, 3] = a3
        total += t
    return total


@njit
def _gauss_pair(site, mu, sweep, block, k0, k1):
    u1, u2 = uniform_pair(site, mu, sweep, block, k0, k1)
    rad = math.sqrt(-2.0 * math.log(u1))
    return rad * math.cos(_TWOPI * u2), rad * math.sin(_TWOPI * u2)


@njit
def _lmul_su2(m, i, j, c0, c1, c2, c3):
    """m <- embed(c) @ m, touching rows i and j only."""
    r00 = complex(c0, c3)
    r01 = complex(c2, c1)
    r10 = complex(-c2, c1)
    r11 = complex(c0, -c3)
    for col in range(3):
        mi = m[i, col]
        mj = m[j, col]
        m[i, col] = r00 * mi + r01 * mj
        m[j, col] = r10 * mi + r11 * mj


@njit
def random_su3_many(sites, mus, sweep, block0, k0, k1, out):
    """Product of three Haar SU(2) subgroup elements per (site, mu) key."""
    for n in range(sites.shape[0]):
        g = np.empty(12)
        for p in range(6):
            z1, z2 = _gauss_pair(sites[n], mus[n], sweep, block0 + p, k0, k1)
            g[2 * p] = z1
            g[2 * p + 1] = z2
        m = np.zeros((3, 3), dtype=np.complex128)
        m[0, 0] = 1.0
        m[1, 1] = 1.0
        m[2, 2] = 1.0
        # left-multiplying R2, then R1, then R0 leaves R0 @ R1 @ R2
        for s in range(2, -1, -1):
            q0 = g[4 * s]
            q1 = g[4 * s + 1]
            q2 = g[4 * s + 2]
            q3 = g[4 * s + 3]
            nrm = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
            _lmul_su2(m, SUBGROUPS[s, 0], SUBGROUPS[s, 1], q0 / nrm, q1 / nrm, q2 / nrm, q3 / nrm)
        out[n] = m


@njit
def _load(links, site, d, dag, out):
    if dag:
        for i in range(3):
            for j in range(3):
                out[i, j] = links[site, d, j, i].conjugate()
    else:
        for i in range(3):
            for j in range(3):
                out[i, j] = links[site, d, i, j]


@njit
def _mul_link(a, links, site, d, dag, out):
    """out = a @ U or a @ U^dagger for U = links[site, d]."""
    for i in range(3):
        for j in range(3):
            if dag:
                s = a[i, 0] * links[site, d, j, 0].conjugate()
                s += a[i, 1] * links[site, d, j, 1].conjugate()
                s += a[i, 2] * links[site, d, j, 2].conjugate()
            else:
                s = a[i, 0] * links[site, d, 0, j]
                s += a[i, 1] * links[site, d, 1, j]
                s += a[i, 2] * links[site, d, 2, j]
            out[i, j] = s


@njit
def _path_product(links, base, foff, dirs, dags, length, prod, tmp):
    _load(links, base + foff[0], dirs[0], dags[0], prod)
    for s in range(1, length):
        _mul_link(prod, links, base + foff[s], dirs[s], dags[s], tmp)
        for i in range(3):
            for j in range(3):
                prod[i, j] = tmp[i, j]


@njit
def _staple(links, base, foff, dirs, dags, lens, npaths, nplaq, c0, c1, out, acc_p, acc_r, prod, tmp):
    acc_p[:, :] = 0.0
    acc_r[:, :] = 0.0
    for p in range(npaths):
        _path_product(links, base, foff[p], dirs[p], dags[p], lens[p], prod, tmp)
        if p < nplaq:
            for i in range(3):
                for j in range(3):
                    acc_p[i, j] += prod[i, j]
        else:
            for i in range(3):
                for j in range(3):
                    acc_r[i, j] += prod[i, j]
    for i in range(3):
        for j in range(3):
            out[i, j] = c0 * acc_p[i, j] + c1 * acc_r[i, j]


@njit
def staples(links, idx, foff, dirs, dags, lens, nplaq, c0, c1, out):
    """Weighted staple sums for sites ``idx`` (foff etc. are the tables for one mu)."""
    npaths = foff.shape[0] if c1 != 0.0 else nplaq
    acc_p = np.empty((3, 3), dtype=np.complex128)
    acc_r = np.empty((3, 3), dtype=np.complex128)
    prod = np.empty((3, 3), dtype=np.complex128)
    tmp = np.empty((3, 3), dtype=np.complex128)
    s = np.empty((3, 3), dtype=np.complex128)
    for n in range(idx.shape[0]):
        _staple(links, idx[n], foff, dirs, dags, lens, npaths, nplaq, c0, c1, s, acc_p, acc_r, prod, tmp)
        out[n] = s


@njit
def _mul_dag(a, b, out):
    """out = a @ b^dagger."""
    for i in range(3):
        for j in range(3):
            s = a[i, 0] * b[j, 0].conjugate()
            s += a[i, 1] * b[j, 1].conjugate()
            s += a[i, 2] * b[j, 2].conjugate()
            out[i, j] = s


@njit
def _project(w, i, j):
    b0 = w[i, i].real + w[j, j].real
    b1 = -w[i, j].imag - w[j, i].imag
    b2 = w[j, i].real - w[i, j].real
    b3 = w[j, j].imag - w[i, i].imag
    return b0, b1, b2, b3


@njit
def _qmul(x0, x1, x2, x3, y0, y1, y2, y3):
    """Parameters of embed(x) @ embed(y)."""
    c0 = x0 * y0 - (x1 * y1 + x2 * y2 + x3 * y3)
    c1 = x0 * y1 + y0 * x1 - (x2 * y3 - x3 * y2)
    c2 = x0 * y2 + y0 * x2 - (x3 * y1 - x1 * y3)
    c3 = x0 * y3 + y0 * x3 - (x1 * y2 - x2 * y1)
    return c0, c1, c2, c3


@njit
def heatbath_su3(u, s, beta, site, mu, sweep, block, k0, k1, max_trials, w):
    """Cabibbo-Marinari heatbath hit on u in place. Returns (block, trials, err)."""
    _mul_dag(u, s, w)
    beta_eff = beta / 3.0
    trials = 0
    for sg in range(3):
        i = SUBGROUPS[sg, 0]
        j = SUBGROUPS[sg, 1]
        b0, b1, b2, b3 = _project(w, i, j)
        k = math.sqrt(b0 * b0 + b1 * b1 + b2 * b2 + b3 * b3)
        if k > 1e-30:
            b0 /= k
            b1 /= k
            b2 /= k
            b3 /= k
        else:
            k = 0.0
            b0, b1, b2, b3 = 1.0, 0.0, 0.0, 0.0
        x0, x1, x2, x3, block, t, err = su2_draw(beta_eff * k, site, mu, sweep, block, k0, k1, max_trials)
        trials += t
        if err != ERR_OK:
            return block, trials, err
        c0, c1, c2, c3 = _qmul(x0, x1, x2, x3, b0, b1, b2, b3)
        _lmul_su2(u, i, j, c0, c1, c2, c3)
        _lmul_su2(w, i, j, c0, c1, c2, c3)
    return block, trials, ERR_OK


@njit
def overrelax_su3(u, s, w):
    """Microcanonical reflection in each subgroup. Returns number of skipped subgroups."""
    _mul_dag(u, s, w)
    skipped = 0
    for sg in range(3):
        i = SUBGROUPS[sg, 0]
        j = SUBGROUPS[sg, 1]
        b0, b1, b2, b3 = _project(w, i, j)
        k = math.sqrt(b0 * b0 + b1 * b1 + b2 * b2 + b3 * b3)
        if k < 1e-30:
            skipped += 1
            continue
        b0 /= k
        b1 /= k
        b2 /= k
        b3 /= k
        c0 = b0 * b0 - (b1 * b1 + b2 * b2 + b3 * b3)
        _lmul_su2(u, i, j, c0, 2.0 * b0 * b1, 2.0 * b0 * b2, 2.0 * b0 * b3)
        _lmul_su2(w, i, j, c0, 2.0 * b0 * b1, 2.0 * b0 * b2, 2.0 * b0 * b3)
    return skipped


@njit
def update_links(links, idx, gsite, mu, sweep, k0, k1, beta, c0, c1, n_hb, n_or,
                 foff, dirs, dags, lens, nplaq, max_trials, stats):
    """Heatbath then overrelaxation hits on links (idx[n], mu).

    stats[0] += sampler trials, stats[1] += sampler draws, stats[2] += skipped
    overrelax subgroups. Returns an error code.
    """
    npaths = foff.shape[0] if c1 != 0.0 else nplaq
    acc_p = np.empty((3, 3), dtype=np.complex128)
    acc_r = np.empty((3, 3), dtype=np.complex128)
    prod = np.empty((3, 3), dtype=np.complex128)
    tmp = np.empty((3, 3), dtype=np.complex128)
    s = np.empty((3, 3), dtype=np.complex128)
    u = np.empty((3, 3), dtype=np.complex128)
    w = np.empty((3, 3), dtype=np.complex128)
    for n in range(idx.shape[0]):
        i = idx[n]
        _staple(links, i, foff, dirs, dags, lens, npaths, nplaq, c0, c1, s, acc_p, acc_r, prod, tmp)
        for a in range(3):
            for b in range(3):
                u[a, b] = links[i, mu, a, b]
        block = 0
        for _ in range(n_hb):
            block, t, err = heatbath_su3(u, s, beta, gsite[n], mu, sweep, block, k0, k1, max_trials, w)
            stats[0] += t
            stats[1] += 3
            if err != ERR_OK:
                return err
        for _ in range(n_or):
            stats[2] += overrelax_su3(u, s, w)
        for a in range(3):
            for b in range(3):
                links[i, mu, a, b] = u[a, b]
    return ERR_OK


@njit
def loop_sums(links, idx, foff, dirs, dags, lens, nloops, nplaq, out):
    """out[0] = sum of Re tr/3 of plaquette loops, out[1] = same for rectangles."""
    prod = np.empty((3, 3), dtype=np.complex128)
    tmp = np.empty((3, 3), dtype=np.complex128)
    sp = 0.0
    sr = 0.0
    for n in range(idx.shape[0]):
        for p in range(nloops):
            _path_product(links, idx[n], foff[p], dirs[p], dags[p], lens[p], prod, tmp)
            v = (prod[0, 0].real + prod[1, 1].real + prod[2, 2].real) / 3.0
            if p < nplaq:
                sp += v
            else:
                sr += v
    out[0] = sp
    out[1] = sr


@njit
def loop_values(links, idx, foff, dirs, dags, lens, out):
    """Re tr/3 of one loop (given by its table row) at each site in idx."""
    prod = np.empty((3, 3), dtype=np.complex128)
    tmp = np.empty((3, 3), dtype=np.complex128)
    for n in range(idx.shape[0]):
        _path_product(links, idx[n], foff, dirs, dags, lens, prod, tmp)
        out[n] = (prod[0, 0].real + prod[1, 1].real + prod[2, 2].real) / 3.0


@njit
def reunitarize_many(mats):
    """Gram-Schmidt reprojection of (n, 3, 3) in place. Returns ERR_DEGENERATE on failure."""
    for n in range(mats.shape[0]):
        m = mats[n]
        nrm = 0.0
        for k in range(3):
            nrm += m[0, k].real * m[0, k].real + m[0, k].imag * m[0, k].imag
        nrm = math.sqrt(nrm)
        if not nrm > 1e-30:
            return ERR_DEGENERATE
        for k in range(3):
            m[0, k] = m[0, k] / nrm
        orig = 0.0
        for k in range(3):
            orig += m[1, k].real * m[1, k].real + m[1, k].imag * m[1, k].imag
        dot = m[0, 0].conjugate() * m[1, 0] + m[0, 1].conjugate() * m[1, 1] + m[0, 2].conjugate() * m[1, 2]
        for k in range(3):
            m[1, k] = m[1, k] - dot * m[0, k]
        nrm = 0.0
        for k in range(3):
            nrm += m[1, k].real * m[1, k].real + m[1, k].imag * m[1, k].imag
        nrm = math.sqrt(nrm)
        if not nrm > max(1e-30, DEPENDENCE_TOL * math.sqrt(orig)):
            return ERR_DEGENERATE
        for k in range(3):
            m[1, k] = m[1, k] / nrm
        m[2, 0] = (m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]).conjugate()
        m[2, 1] = (m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]).conjugate()
        m[2, 2] = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]).conjugate()
    return ERR_OK


@njit
def lu_factor(a, piv):
    """In-place LU with partial pivoting (row-major, Doolittle). Returns 0 or 1 + singular column."""
    n = a.shape[0]
    for k in range(n):
        p = k
        best = abs(a[k, k])
        for r in range(k + 1, n):
            v = abs(a[r, k])
            if v > best:
                best = v
                p = r
        piv[k] = p
        if best == 0.0:
            return k + 1
        if p != k:
            for c in range(n):
                t = a[k, c]
                a[k, c] = a[p, c]
                a[p, c] = t
        inv = 1.0 / a[k, k]
        for r in range(k + 1, n):
            a[r, k] *= inv
        for r in range(k + 1, n):
            f = a[r, k]
            if f != 0.0:
                for c in range(k + 1, n):
                    a[r, c] -= f * a[k, c]
    return 0


@njit
def lu_solve(lu, piv, b):
    n = lu.shape[0]
    for k in range(n):
        p = piv[k]
        if p != k:
            t = b[k]
            b[k] = b[p]
            b[p] = t
    for r in range(1, n):
        s = b[r]
        for c in range(r):
            s -= lu[r, c] * b[c]
        b[r] = s
    for r in range(n - 1, -1, -1):
        s = b[r]
        for c in range(r + 1, n):
            s -= lu[r, c] * b[c]
        b[r] = s / lu[r, r]


_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


@njit
def fnv1a64(data):
    h = _FNV_OFFSET
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * _FNV_PRIME
    return h


@njit
def heatbath_one(u, s, beta, site, mu, sweep, block, k0, k1, max_trials):
    out = u.copy()
    w = np.empty((3, 3), dtype=np.complex128)
    block, trials, err = heatbath_su3(out, s, beta, site, mu, sweep, block, k0, k1, max_trials, w)
    return out, block, trials, err


@njit
def overrelax_one(u, s):
    out = u.copy()
    w = np.empty((3, 3), dtype=np.complex128)
    skipped = overrelax_su3(out, s, w)
    return out, skipped

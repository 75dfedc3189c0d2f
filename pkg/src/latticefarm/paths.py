"""Link paths for plaquette/rectangle loops and their staples.

A path is a sequence of moves ``(direction, +1|-1)``. A forward move in
direction d at site y uses ``U_d(y)``; a backward move uses ``U_d(y - d)^dagger``.
Both kernel backends and the schedule-safety check read these tables, so the
accumulation order is defined exactly once, here.
"""

import numpy as np

NDIM = 4
MAX_STAPLE_LEN = 5
MAX_LOOP_LEN = 6

PLAQ = 0
RECT = 1


def _staple_moves(mu, nu):
    """Staples of link (x, mu) in the (mu, nu) plane, each a path x -> x+mu."""
    m, n = mu, nu
    plaq = [
        [(n, 1), (m, 1), (n, -1)],
        [(n, -1), (m, 1), (n, 1)],
    ]
    rect = [
        [(n, 1), (m, 1), (m, 1), (n, -1), (m, -1)],
        [(m, -1), (n, 1), (m, 1), (m, 1), (n, -1)],
        [(n, 1), (n, 1), (m, 1), (n, -1), (n, -1)],
        [(n, -1), (m, 1), (m, 1), (n, 1), (m, -1)],
        [(m, -1), (n, -1), (m, 1), (m, 1), (n, 1)],
        [(n, -1), (n, -1), (m, 1), (n, 1), (n, 1)],
    ]
    return plaq, rect


def plaquette_moves(mu, nu):
    return [(mu, 1), (nu, 1), (mu, -1), (nu, -1)]


def rectangle_moves(mu, nu):
    """1x2 loop, long in mu."""
    return [(mu, 1), (mu, 1), (nu, 1), (mu, -1), (mu, -1), (nu, -1)]


def moves_to_links(moves, start=(0, 0, 0, 0)):
    """Turn moves into ``[(site_offset, direction, dagger)]`` link references."""
    cur = list(start)
    out = []
    for d, s in moves:
        if s > 0:
            out.append((tuple(cur), d, False))
            cur[d] += 1
        else:
            cur[d] -= 1
            out.append((tuple(cur), d, True))
    return out


def staple_paths(mu):
    """All 24 staple paths of link direction mu in accumulation order.

    Order: plaquette staples by (nu ascending, upper then lower), then
    rectangle staples by (nu ascending, shapes R1..R6).
    Returns a list of ``(kind, links)``.
    """
    nus = [nu for nu in range(NDIM) if nu != mu]
    plaqs, rects = [], []
    for nu in nus:
        p, r = _staple_moves(mu, nu)
        plaqs += [(PLAQ, moves_to_links(mv)) for mv in p]
        rects += [(RECT, moves_to_links(mv)) for mv in r]
    return plaqs + rects


def loop_list():
    """Closed loops measured per site: 6 plaquettes (mu<nu) then 12 rectangles (mu!=nu)."""
    loops = []
    for mu in range(NDIM):
        for nu in range(mu + 1, NDIM):
            loops.append((PLAQ, moves_to_links(plaquette_moves(mu, nu))))
    for mu in range(NDIM):
        for nu in range(NDIM):
            if mu != nu:
                loops.append((RECT, moves_to_links(rectangle_moves(mu, nu))))
    return loops


def _pack(paths, maxlen):
    n = len(paths)
    off = np.zeros((n, maxlen, NDIM), dtype=np.int64)
    dirs = np.zeros((n, maxlen), dtype=np.int64)
    dags = np.zeros((n, maxlen), dtype=np.int64)
    lens = np.zeros(n, dtype=np.int64)
    kinds = np.zeros(n, dtype=np.int64)
    for p, (kind, links) in enumerate(paths):
        kinds[p] = kind
        lens[p] = len(links)
        for s, (site, d, dag) in enumerate(links):
            off[p, s] = site
            dirs[p, s] = d
            dags[p, s] = int(dag)
    return off, dirs, dags, lens, kinds


# (4, 24, 5, 4) site offsets and (4, 24, 5) dirs/daggers for staples
STAPLE_OFF, STAPLE_DIR, STAPLE_DAG, STAPLE_LEN, STAPLE_KIND = (
    np.stack(a) for a in zip(*(_pack(staple_paths(mu), MAX_STAPLE_LEN) for mu in range(NDIM)))
)
N_PLAQ_STAPLES = 6
N_STAPLES = 24

LOOP_OFF, LOOP_DIR, LOOP_DAG, LOOP_LEN, LOOP_KIND = _pack(loop_list(), MAX_LOOP_LEN)
N_PLAQ_LOOPS = 6
N_LOOPS = 18


def flat_offsets(off, strides):
    """Project 4-vector site offsets onto a flat padded index using strides."""
    return np.tensordot(off, np.asarray(strides, dtype=np.int64), axes=([-1], [0])).astype(np.int64)

"""Numba kernels for the Euler / Skorokhod-projection scheme.

Geometry is passed as the tuple produced by :func:`pack_geometry`.  Per-path
state lives in small arrays that the kernels update in place:

    pos      float64[2]
    sides    int64[nb]     +1 / -1 per barrier (outer barrier first)
    lt       float64[nb]   accumulated local time
    budget   float64[nb]   remaining local time before the next side switch
    rng      uint64[1]     splitmix64 state for the exponential budgets
    ball     float64[3]    (x, y, r): a disc known to be free of barriers
"""
import math

import numpy as np
from numba import njit

OK = 0
STEP_TOO_LARGE = 2

_ON_EPS = 1e-12  # relative to the cell size: distances below this are "on"


def pack_geometry(index, leave_plus, leave_minus, impermeable):
    return (
        index.seg_a, index.seg_b, index.seg_normal, index.vert_normal_a,
        index.vert_normal_b, index.seg_barrier,
        float(index.origin[0]), float(index.origin[1]), float(index.cell),
        int(index.shape[0]), int(index.shape[1]), index.cell_ptr, index.cell_items,
        np.asarray(leave_plus, dtype=np.float64), np.asarray(leave_minus, dtype=np.float64),
        np.asarray(impermeable, dtype=np.bool_),
    )


@njit(cache=True)
def _splitmix(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def draw_exponential(state):
    u = (_splitmix(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    return -math.log(1.0 - u)


@njit(cache=True, inline='always')
def _leave_rate(lp, lm, imp, b, side):
    if imp[b]:
        return 0.0
    return lp[b] if side > 0 else lm[b]


@njit(cache=True)
def _step(pos, sides, lt, budget, rng, ball, dx, dy,
          seg_a, seg_b, seg_n, vna, vnb, bar, ox, oy, cell, nx, ny, ptr, items,
          lp, lm, imp, best_d2, best_seg, best_tau, info):
    info[0] = -1.0
    info[3] = -1.0
    px = pos[0] + dx
    py = pos[1] + dy
    r = ball[2]
    if (px - ball[0]) ** 2 + (py - ball[1]) ** 2 < r * r:
        pos[0] = px
        pos[1] = py
        return OK
    reach = 1 + int(math.sqrt(dx * dx + dy * dy) / cell)
    if reach > nx + ny:
        reach = nx + ny
    trust = reach * cell
    on_eps = _ON_EPS * cell
    projected = False
    nb = best_d2.shape[0]
    for _round in range(4):
        # nearest candidate segment per barrier in the cell block around p;
        # a candidate closer than reach * cell is the true nearest segment
        for b in range(nb):
            best_d2[b] = np.inf
            best_seg[b] = -1
        ix = int(math.floor((px - ox) / cell))
        iy = int(math.floor((py - oy) / cell))
        for cx in range(max(0, ix - reach), min(nx, ix + reach + 1)):
            for cy in range(max(0, iy - reach), min(ny, iy + reach + 1)):
                c = cx * ny + cy
                for j in range(ptr[c], ptr[c + 1]):
                    sg = items[j]
                    ax = seg_a[sg, 0]
                    ay = seg_a[sg, 1]
                    ex = seg_b[sg, 0] - ax
                    ey = seg_b[sg, 1] - ay
                    tau = ((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey)
                    if tau < 0.0:
                        tau = 0.0
                    elif tau > 1.0:
                        tau = 1.0
                    d2 = (px - ax - tau * ex) ** 2 + (py - ay - tau * ey) ** 2
                    b = bar[sg]
                    # ties keep the lowest segment index
                    if d2 < best_d2[b] or (d2 == best_d2[b] and sg < best_seg[b]):
                        best_d2[b] = d2
                        best_seg[b] = sg
                        best_tau[b] = tau
        changed = False
        for b in range(nb):
            sg = best_seg[b]
            if sg < 0 or best_d2[b] >= trust * trust:
                continue
            tau = best_tau[b]
            ax = seg_a[sg, 0]
            ay = seg_a[sg, 1]
            qx = ax + tau * (seg_b[sg, 0] - ax)
            qy = ay + tau * (seg_b[sg, 1] - ay)
            if tau <= 0.0:
                nnx, nny = vna[sg, 0], vna[sg, 1]
            elif tau >= 1.0:
                nnx, nny = vnb[sg, 0], vnb[sg, 1]
            else:
                nnx, nny = seg_n[sg, 0], seg_n[sg, 1]
            depth = math.sqrt(best_d2[b])
            sd = depth if (px - qx) * nnx + (py - qy) * nny >= 0.0 else -depth
            if depth <= on_eps or sd * sides[b] >= 0.0:
                continue
            rate = _leave_rate(lp, lm, imp, b, sides[b])
            if rate > 0.0 and depth >= budget[b]:
                lt[b] += budget[b]
                sides[b] = -sides[b]
                new_rate = _leave_rate(lp, lm, imp, b, sides[b])
                if new_rate == 0.0:
                    budget[b] = np.inf
                elif math.isinf(new_rate):
                    budget[b] = 0.0
                else:
                    budget[b] = draw_exponential(rng) / new_rate
                info[3] = b
            else:
                lt[b] += depth
                budget[b] -= depth
                px = qx
                py = qy
                projected = True
                info[0] = b
                info[1] = qx
                info[2] = qy
            changed = True
            break
        if not changed:
            pos[0] = px
            pos[1] = py
            if projected:
                ball[0] = px
                ball[1] = py
                ball[2] = 0.0
            else:
                dmin = trust
                for b in range(nb):
                    if best_seg[b] >= 0:
                        d = math.sqrt(best_d2[b])
                        if d < dmin:
                            dmin = d
                ball[0] = px
                ball[1] = py
                ball[2] = dmin
            return OK
    return STEP_TOO_LARGE


@njit(cache=True)
def step(pos, sides, lt, budget, rng, ball, dx, dy, G, best_d2, best_seg, best_tau, info):
    """Advance one Euler step with increment (dx, dy).

    ``info`` receives (hit barrier, hit x, hit y, flipped barrier) for the
    last projection / side switch of this step, -1 when none happened.
    Returns OK or STEP_TOO_LARGE.
    """
    return _step(pos, sides, lt, budget, rng, ball, dx, dy,
                 G[0], G[1], G[2], G[3], G[4], G[5], G[6], G[7], G[8], G[9], G[10],
                 G[11], G[12], G[13], G[14], G[15], best_d2, best_seg, best_tau, info)


@njit(cache=True)
def run(pos, sides, lt, budget, rng, ball, incs, G, stride, offset, samples, n_written,
        dense, record_dense, switch_log, n_switch, first_hit, step0):
    """Run all increments, writing a sample every ``stride`` steps.

    ``offset`` is the number of steps already taken since the last recorded
    sample.  ``first_hit`` (step, barrier, x, y) is filled at the first
    projection or side switch if ``first_hit[0] < 0``; ``step0`` is the
    global index of the first increment.  Returns (code, steps done, offset,
    samples written, switches).
    """
    nb = sides.shape[0]
    best_d2 = np.empty(nb)
    best_seg = np.empty(nb, dtype=np.int64)
    best_tau = np.empty(nb)
    info = np.empty(4)
    seg_a, seg_b, seg_n, vna, vnb, bar, ox, oy, cell, nx, ny, ptr, items, lp, lm, imp = G
    for k in range(incs.shape[0]):
        dx = incs[k, 0]
        dy = incs[k, 1]
        px = pos[0] + dx
        py = pos[1] + dy
        if (px - ball[0]) ** 2 + (py - ball[1]) ** 2 < ball[2] * ball[2]:
            # free move: no barrier within reach
            pos[0] = px
            pos[1] = py
            info[0] = -1.0
            info[3] = -1.0
            code = OK
        else:
            code = _step(pos, sides, lt, budget, rng, ball, dx, dy,
                         seg_a, seg_b, seg_n, vna, vnb, bar, ox, oy, cell, nx, ny, ptr, items,
                         lp, lm, imp, best_d2, best_seg, best_tau, info)
        if code != OK:
            return code, k, offset, n_written, n_switch
        if first_hit[0] < 0.0 and (info[0] >= 0.0 or info[3] >= 0.0):
            first_hit[0] = step0 + k + 1
            if info[0] >= 0.0:
                first_hit[1] = info[0]
                first_hit[2] = info[1]
                first_hit[3] = info[2]
            else:
                first_hit[1] = info[3]
                first_hit[2] = pos[0]
                first_hit[3] = pos[1]
        if info[3] >= 0.0:
            if n_switch < switch_log.shape[0]:
                b = int(info[3])
                switch_log[n_switch, 0] = b
                switch_log[n_switch, 1] = lt[b]
            n_switch += 1
        if record_dense:
            dense[k, 0] = pos[0]
            dense[k, 1] = pos[1]
        offset += 1
        if offset == stride:
            offset = 0
            if n_written < samples.shape[0]:
                samples[n_written, 0] = pos[0]
                samples[n_written, 1] = pos[1]
                n_written += 1
    return OK, incs.shape[0], offset, n_written, n_switch


@njit(cache=True)
def run_until_switch(pos, sides, lt, budget, rng, ball, incs, G):
    """Step until the first side switch; returns (code, steps, barrier, local time)."""
    nb = sides.shape[0]
    best_d2 = np.empty(nb)
    best_seg = np.empty(nb, dtype=np.int64)
    best_tau = np.empty(nb)
    info = np.empty(4)
    seg_a, seg_b, seg_n, vna, vnb, bar, ox, oy, cell, nx, ny, ptr, items, lp, lm, imp = G
    for k in range(incs.shape[0]):
        dx = incs[k, 0]
        dy = incs[k, 1]
        px = pos[0] + dx
        py = pos[1] + dy
        if (px - ball[0]) ** 2 + (py - ball[1]) ** 2 < ball[2] * ball[2]:
            # free move: no barrier within reach
            pos[0] = px
            pos[1] = py
            info[0] = -1.0
            info[3] = -1.0
            code = OK
        else:
            code = _step(pos, sides, lt, budget, rng, ball, dx, dy,
                         seg_a, seg_b, seg_n, vna, vnb, bar, ox, oy, cell, nx, ny, ptr, items,
                         lp, lm, imp, best_d2, best_seg, best_tau, info)
        if code != OK:
            return code, k, -1, 0.0
        if info[3] >= 0.0:
            b = int(info[3])
            return OK, k + 1, b, lt[b]
    return OK, incs.shape[0], -1, 0.0


@njit(cache=True)
def run_cover(pos, sides, lt, budget, rng, ball, incs, G, bins, eps, uncovered, n_unc, done_at, step0):
    """Track coverage of the outer barrier by hit points.

    ``bins`` are points on the outer curve, ``uncovered[e, :n_unc[e]]`` the
    bins not yet within ``eps[e]`` of a hit.  ``done_at[e]`` receives the
    global step index at which coverage for ``eps[e]`` completed.
    Returns (code, steps done, all covered).
    """
    nb = sides.shape[0]
    best_d2 = np.empty(nb)
    best_seg = np.empty(nb, dtype=np.int64)
    best_tau = np.empty(nb)
    info = np.empty(4)
    seg_a, seg_b, seg_n, vna, vnb, bar, ox, oy, cell, nx, ny, ptr, items, lp, lm, imp = G
    ne = eps.shape[0]
    for k in range(incs.shape[0]):
        dx = incs[k, 0]
        dy = incs[k, 1]
        px = pos[0] + dx
        py = pos[1] + dy
        if (px - ball[0]) ** 2 + (py - ball[1]) ** 2 < ball[2] * ball[2]:
            # free move: no barrier within reach
            pos[0] = px
            pos[1] = py
            info[0] = -1.0
            info[3] = -1.0
            code = OK
        else:
            code = _step(pos, sides, lt, budget, rng, ball, dx, dy,
                         seg_a, seg_b, seg_n, vna, vnb, bar, ox, oy, cell, nx, ny, ptr, items,
                         lp, lm, imp, best_d2, best_seg, best_tau, info)
        if code != OK:
            return code, k, False
        if info[0] == 0.0:
            hx, hy = info[1], info[2]
            all_done = True
            for e in range(ne):
                if n_unc[e] == 0:
                    continue
                e2 = eps[e] * eps[e]
                j = 0
                while j < n_unc[e]:
                    bi = uncovered[e, j]
                    if (bins[bi, 0] - hx) ** 2 + (bins[bi, 1] - hy) ** 2 <= e2:
                        n_unc[e] -= 1
                        uncovered[e, j] = uncovered[e, n_unc[e]]
                    else:
                        j += 1
                if n_unc[e] == 0:
                    done_at[e] = step0 + k + 1
                else:
                    all_done = False
            if all_done:
                return OK, k + 1, True
    return OK, incs.shape[0], False


@njit(cache=True)
def reflect_halfplane(x, lt, incs):
    """Skorokhod projection onto {x >= 0} for many independent paths.

    ``x`` and ``lt`` hold the normal coordinate and local time of each path;
    ``incs`` has shape (steps, paths).
    """
    for k in range(incs.shape[0]):
        for i in range(x.shape[0]):
            v = x[i] + incs[k, i]
            if v < 0.0:
                lt[i] -= v
                v = 0.0
            x[i] = v

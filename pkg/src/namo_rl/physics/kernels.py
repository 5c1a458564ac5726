"""Numba kernels for the packed-array rigid-body world.

A world is a ``(N_BODIES, NBF)`` float64 array (row 0 is the robot, rows 1..5
the box slots) plus a ``(n_walls, NWF)`` array of capsule segments. All
functions here operate in place on those arrays so that a batch of worlds can
be stepped without Python overhead per sub-step.
"""
import math

import numpy as np
from numba import njit

N_BODIES = 6
MAX_BOXES = 5

# body row layout
BX, BY, BTH, BVX, BVY, BW, BHX, BHY, BINVM, BINVI, BMASS, BINERTIA, BACTIVE, BMU = range(14)
NBF = 14

# wall row layout
WX1, WY1, WX2, WY2, WR, WACTIVE = range(6)
NWF = 6

# solver parameter vector layout
(P_DT, P_ACCEL, P_ALPHA, P_GRIP, P_GRAVITY, P_MU_CONTACT, P_SLOP, P_BETA,
 P_MAX_CORRECTION, P_MARGIN, P_VEL_ITERS, P_POS_ITERS, P_TOUCH) = range(13)
NPARAM = 13

# contact row layout
(CA, CB, CWALL, CNX, CNY, CPX, CPY, CSEP, CPN, CPT, CKN, CKT,
 CRAX, CRAY, CRBX, CRBY) = range(16)
NCF = 16
MAX_CONTACTS = 256

# report layout
R_ROBOT_WALL = 0
R_ROBOT_BOX = 1
R_BOX_WALL = 1 + MAX_BOXES
R_PENETRATION = 1 + 2 * MAX_BOXES
R_GOAL_DIST = R_PENETRATION + 1
NREPORT = R_GOAL_DIST + 1

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap_angle(a):
    """Map an angle into (-pi, pi]; values already inside are returned untouched."""
    if a > math.pi:
        k = math.ceil((a - math.pi) / TWO_PI)
        a = a - TWO_PI * k
    elif a <= -math.pi:
        k = math.floor((-math.pi - a) / TWO_PI) + 1.0
        a = a + TWO_PI * k
    return a


@njit(cache=True)
def _clamp(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


@njit(cache=True)
def rect_vertices(cx, cy, th, hx, hy, out):
    """Fill ``out`` (4, 2) with CCW corners starting at body-frame (+hx, +hy)."""
    c = math.cos(th)
    s = math.sin(th)
    lx = (hx, -hx, -hx, hx)
    ly = (hy, hy, -hy, -hy)
    for k in range(4):
        out[k, 0] = cx + c * lx[k] - s * ly[k]
        out[k, 1] = cy + s * lx[k] + c * ly[k]


@njit(cache=True)
def point_rect_signed(px, py, cx, cy, th, hx, hy):
    """Signed distance from a point to an oriented rectangle.

    Returns (sep, nx, ny) with the unit normal pointing out of the rectangle
    towards the point. ``sep`` is negative inside.
    """
    c = math.cos(th)
    s = math.sin(th)
    dx = px - cx
    dy = py - cy
    qx = c * dx + s * dy
    qy = -s * dx + c * dy
    if abs(qx) <= hx and abs(qy) <= hy:
        ex = hx - abs(qx)
        ey = hy - abs(qy)
        if ex < ey:
            lnx = 1.0 if qx >= 0.0 else -1.0
            lny = 0.0
            sep = -ex
        else:
            lnx = 0.0
            lny = 1.0 if qy >= 0.0 else -1.0
            sep = -ey
    else:
        ddx = qx - _clamp(qx, -hx, hx)
        ddy = qy - _clamp(qy, -hy, hy)
        d = math.sqrt(ddx * ddx + ddy * ddy)
        sep = d
        lnx = ddx / d
        lny = ddy / d
    return sep, c * lnx - s * lny, s * lnx + c * lny


@njit(cache=True)
def point_segment_closest(px, py, x1, y1, x2, y2):
    ex = x2 - x1
    ey = y2 - y1
    ll = ex * ex + ey * ey
    t = 0.0
    if ll > 0.0:
        t = _clamp(((px - x1) * ex + (py - y1) * ey) / ll, 0.0, 1.0)
    return x1 + t * ex, y1 + t * ey


@njit(cache=True)
def rect_aabb_half(th, hx, hy):
    c = abs(math.cos(th))
    s = abs(math.sin(th))
    return c * hx + s * hy, s * hx + c * hy


@njit(cache=True)
def _push_contact(cont, n, a, b, wall, nx, ny, px, py, sep):
    if n >= MAX_CONTACTS:
        return n
    cont[n, CA] = a
    cont[n, CB] = b
    cont[n, CWALL] = wall
    cont[n, CNX] = nx
    cont[n, CNY] = ny
    cont[n, CPX] = px
    cont[n, CPY] = py
    cont[n, CSEP] = sep
    cont[n, CPN] = 0.0
    cont[n, CPT] = 0.0
    return n + 1


@njit(cache=True)
def _edge_normal(v, n, i):
    j = i + 1 if i + 1 < n else 0
    ex = v[j, 0] - v[i, 0]
    ey = v[j, 1] - v[i, 1]
    ln = math.sqrt(ex * ex + ey * ey)
    return ey / ln, -ex / ln


@njit(cache=True)
def _max_separation(va, na, vb, nb):
    best = -1e300
    best_i = 0
    for i in range(na):
        nx, ny = _edge_normal(va, na, i)
        s = 1e300
        for j in range(nb):
            d = nx * (vb[j, 0] - va[i, 0]) + ny * (vb[j, 1] - va[i, 1])
            if d < s:
                s = d
        if s > best:
            best = s
            best_i = i
    return best_i, best


@njit(cache=True)
def _segment_closest_params(p1x, p1y, q1x, q1y, p2x, p2y, q2x, q2y):
    """Closest points between segments p1-q1 and p2-q2 as (f1, f2, dist_sq)."""
    d1x = q1x - p1x
    d1y = q1y - p1y
    d2x = q2x - p2x
    d2y = q2y - p2y
    rx = p1x - p2x
    ry = p1y - p2y
    a = d1x * d1x + d1y * d1y
    e = d2x * d2x + d2y * d2y
    f = d2x * rx + d2y * ry
    c = d1x * rx + d1y * ry
    b = d1x * d2x + d1y * d2y
    den = a * e - b * b
    s = 0.0
    if den > 1e-14:
        s = _clamp((b * f - c * e) / den, 0.0, 1.0)
    t = (b * s + f) / e if e > 0.0 else 0.0
    if t < 0.0:
        t = 0.0
        s = _clamp(-c / a, 0.0, 1.0) if a > 0.0 else 0.0
    elif t > 1.0:
        t = 1.0
        s = _clamp((b - c) / a, 0.0, 1.0) if a > 0.0 else 0.0
    cx = p1x + s * d1x - (p2x + t * d2x)
    cy = p1y + s * d1y - (p2y + t * d2y)
    return s, t, cx * cx + cy * cy


@njit(cache=True)
def collide_polygons(va, na, ra, vb, nb, rb, margin, out):
    """Contact manifold between two rounded convex polygons (CCW vertices).

    Writes up to two rows ``[nx, ny, px, py, sep]`` into ``out`` with the
    normal pointing from A to B and returns the row count. A two-vertex
    polygon is a segment; with a radius it is a capsule.
    """
    radius = ra + rb
    ea, sa = _max_separation(va, na, vb, nb)
    eb, sb = _max_separation(vb, nb, va, na)
    if sa > margin + radius or sb > margin + radius:
        return 0
    flip = False
    if sb > sa + 0.0005:
        flip = True
        v1 = vb
        n1 = nb
        r1 = rb
        e1 = eb
        v2 = va
        n2 = na
        r2 = ra
    else:
        v1 = va
        n1 = na
        r1 = ra
        e1 = ea
        v2 = vb
        n2 = nb
        r2 = rb
    i11 = e1
    i12 = e1 + 1 if e1 + 1 < n1 else 0
    nx, ny = _edge_normal(v1, n1, e1)
    # incident edge: most anti-parallel normal on the other polygon
    best = 1e300
    i21 = 0
    for k in range(n2):
        mx, my = _edge_normal(v2, n2, k)
        d = mx * nx + my * ny
        if d < best:
            best = d
            i21 = k
    i22 = i21 + 1 if i21 + 1 < n2 else 0
    v11x, v11y = v1[i11, 0], v1[i11, 1]
    v12x, v12y = v1[i12, 0], v1[i12, 1]
    v21x, v21y = v2[i21, 0], v2[i21, 1]
    v22x, v22y = v2[i22, 0], v2[i22, 1]
    if max(sa, sb) > 0.0005:
        # cores apart: a vertex-vertex configuration needs the rounded normal
        f1, f2, dsq = _segment_closest_params(v11x, v11y, v12x, v12y, v21x, v21y, v22x, v22y)
        if (f1 == 0.0 or f1 == 1.0) and (f2 == 0.0 or f2 == 1.0):
            c1x = v11x + f1 * (v12x - v11x)
            c1y = v11y + f1 * (v12y - v11y)
            c2x = v21x + f2 * (v22x - v21x)
            c2y = v21y + f2 * (v22y - v21y)
            d = math.sqrt(dsq)
            if d - radius > margin or d < 1e-12:
                return 0
            ux = (c2x - c1x) / d
            uy = (c2y - c1y) / d
            sep = d - radius
            px = c1x + (r1 + 0.5 * sep) * ux
            py = c1y + (r1 + 0.5 * sep) * uy
            if flip:
                ux = -ux
                uy = -uy
            out[0, 0] = ux
            out[0, 1] = uy
            out[0, 2] = px
            out[0, 3] = py
            out[0, 4] = sep
            return 1
    tx = v12x - v11x
    ty = v12y - v11y
    tl = math.sqrt(tx * tx + ty * ty)
    tx /= tl
    ty /= tl
    lower1 = 0.0
    upper1 = (v12x - v11x) * tx + (v12y - v11y) * ty
    upper2 = (v21x - v11x) * tx + (v21y - v11y) * ty
    lower2 = (v22x - v11x) * tx + (v22y - v11y) * ty
    span = upper2 - lower2
    if lower2 < lower1 and span > 1e-12:
        f = (lower1 - lower2) / span
        lx = v22x + f * (v21x - v22x)
        ly = v22y + f * (v21y - v22y)
    else:
        lx = v22x
        ly = v22y
    if upper2 > upper1 and span > 1e-12:
        f = (upper1 - lower2) / span
        ux_ = v22x + f * (v21x - v22x)
        uy_ = v22y + f * (v21y - v22y)
    else:
        ux_ = v21x
        uy_ = v21y
    sep_l = (lx - v11x) * nx + (ly - v11y) * ny
    sep_u = (ux_ - v11x) * nx + (uy_ - v11y) * ny
    lx += 0.5 * (r1 - r2 - sep_l) * nx
    ly += 0.5 * (r1 - r2 - sep_l) * ny
    ux_ += 0.5 * (r1 - r2 - sep_u) * nx
    uy_ += 0.5 * (r1 - r2 - sep_u) * ny
    onx = -nx if flip else nx
    ony = -ny if flip else ny
    cnt = 0
    if sep_l - radius < margin:
        out[cnt, 0] = onx
        out[cnt, 1] = ony
        out[cnt, 2] = lx
        out[cnt, 3] = ly
        out[cnt, 4] = sep_l - radius
        cnt += 1
    if sep_u - radius < margin:
        out[cnt, 0] = onx
        out[cnt, 1] = ony
        out[cnt, 2] = ux_
        out[cnt, 3] = uy_
        out[cnt, 4] = sep_u - radius
        cnt += 1
    return cnt


@njit(cache=True)
def detect_contacts(bodies, walls, margin, cont):
    """Clipped contact manifolds with a speculative margin.

    Normals point from body ``a`` to body ``b`` (or to the wall). Pairs are
    visited in a fixed order so results are bitwise reproducible.
    """
    n = 0
    va = np.empty((4, 2))
    vb = np.empty((4, 2))
    seg = np.empty((2, 2))
    man = np.empty((2, 5))
    nb = bodies.shape[0]
    for i in range(nb):
        if bodies[i, BACTIVE] == 0.0:
            continue
        ax, ay, ath = bodies[i, BX], bodies[i, BY], bodies[i, BTH]
        ahx, ahy = bodies[i, BHX], bodies[i, BHY]
        aex, aey = rect_aabb_half(ath, ahx, ahy)
        rect_vertices(ax, ay, ath, ahx, ahy, va)
        for j in range(i + 1, nb):
            if bodies[j, BACTIVE] == 0.0:
                continue
            if bodies[i, BINVM] == 0.0 and bodies[j, BINVM] == 0.0:
                continue
            bx, by, bth = bodies[j, BX], bodies[j, BY], bodies[j, BTH]
            bex, bey = rect_aabb_half(bth, bodies[j, BHX], bodies[j, BHY])
            if abs(ax - bx) > aex + bex + margin or abs(ay - by) > aey + bey + margin:
                continue
            rect_vertices(bx, by, bth, bodies[j, BHX], bodies[j, BHY], vb)
            m = collide_polygons(va, 4, 0.0, vb, 4, 0.0, margin, man)
            for k in range(m):
                n = _push_contact(cont, n, i, j, -1, man[k, 0], man[k, 1], man[k, 2], man[k, 3], man[k, 4])
        if bodies[i, BINVM] == 0.0:
            continue
        for w in range(walls.shape[0]):
            if walls[w, WACTIVE] == 0.0:
                continue
            x1, y1, x2, y2, r = walls[w, WX1], walls[w, WY1], walls[w, WX2], walls[w, WY2], walls[w, WR]
            if (ax + aex < min(x1, x2) - r - margin or ax - aex > max(x1, x2) + r + margin
                    or ay + aey < min(y1, y2) - r - margin or ay - aey > max(y1, y2) + r + margin):
                continue
            seg[0, 0] = x1
            seg[0, 1] = y1
            seg[1, 0] = x2
            seg[1, 1] = y2
            m = collide_polygons(va, 4, 0.0, seg, 2, r, margin, man)
            for k in range(m):
                n = _push_contact(cont, n, i, -1, w, man[k, 0], man[k, 1], man[k, 2], man[k, 3], man[k, 4])
    return n


@njit(cache=True)
def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True)
def _prepare(bodies, cont, n):
    for k in range(n):
        a = int(cont[k, CA])
        b = int(cont[k, CB])
        nx, ny = cont[k, CNX], cont[k, CNY]
        tx, ty = -ny, nx
        rax = cont[k, CPX] - bodies[a, BX]
        ray = cont[k, CPY] - bodies[a, BY]
        kn = bodies[a, BINVM] + bodies[a, BINVI] * _cross(rax, ray, nx, ny) ** 2
        kt = bodies[a, BINVM] + bodies[a, BINVI] * _cross(rax, ray, tx, ty) ** 2
        rbx = 0.0
        rby = 0.0
        if b >= 0:
            rbx = cont[k, CPX] - bodies[b, BX]
            rby = cont[k, CPY] - bodies[b, BY]
            kn += bodies[b, BINVM] + bodies[b, BINVI] * _cross(rbx, rby, nx, ny) ** 2
            kt += bodies[b, BINVM] + bodies[b, BINVI] * _cross(rbx, rby, tx, ty) ** 2
        cont[k, CKN] = 1.0 / kn if kn > 0.0 else 0.0
        cont[k, CKT] = 1.0 / kt if kt > 0.0 else 0.0
        cont[k, CRAX] = rax
        cont[k, CRAY] = ray
        cont[k, CRBX] = rbx
        cont[k, CRBY] = rby


@njit(cache=True)
def _apply_impulse(bodies, a, b, jx, jy, rax, ray, rbx, rby):
    bodies[a, BVX] -= bodies[a, BINVM] * jx
    bodies[a, BVY] -= bodies[a, BINVM] * jy
    bodies[a, BW] -= bodies[a, BINVI] * _cross(rax, ray, jx, jy)
    if b >= 0:
        bodies[b, BVX] += bodies[b, BINVM] * jx
        bodies[b, BVY] += bodies[b, BINVM] * jy
        bodies[b, BW] += bodies[b, BINVI] * _cross(rbx, rby, jx, jy)


@njit(cache=True)
def _relative_velocity(bodies, a, b, rax, ray, rbx, rby):
    vx = -(bodies[a, BVX] - bodies[a, BW] * ray)
    vy = -(bodies[a, BVY] + bodies[a, BW] * rax)
    if b >= 0:
        vx += bodies[b, BVX] - bodies[b, BW] * rby
        vy += bodies[b, BVY] + bodies[b, BW] * rbx
    return vx, vy


@njit(cache=True)
def solve_velocities(bodies, cont, n, dt, mu, iterations):
    """Sequential impulses, no restitution, speculative approach allowance."""
    inv_dt = 1.0 / dt
    for _ in range(iterations):
        for k in range(n):
            a = int(cont[k, CA])
            b = int(cont[k, CB])
            nx, ny = cont[k, CNX], cont[k, CNY]
            rax, ray, rbx, rby = cont[k, CRAX], cont[k, CRAY], cont[k, CRBX], cont[k, CRBY]
            vx, vy = _relative_velocity(bodies, a, b, rax, ray, rbx, rby)
            vn = vx * nx + vy * ny
            target = -max(cont[k, CSEP], 0.0) * inv_dt
            dp = (target - vn) * cont[k, CKN]
            p_old = cont[k, CPN]
            p_new = max(p_old + dp, 0.0)
            cont[k, CPN] = p_new
            dp = p_new - p_old
            if dp != 0.0:
                _apply_impulse(bodies, a, b, dp * nx, dp * ny, rax, ray, rbx, rby)
            # friction, bounded by the accumulated normal impulse
            tx, ty = -ny, nx
            vx, vy = _relative_velocity(bodies, a, b, rax, ray, rbx, rby)
            vt = vx * tx + vy * ty
            dt_imp = -vt * cont[k, CKT]
            lim = mu * cont[k, CPN]
            t_old = cont[k, CPT]
            t_new = _clamp(t_old + dt_imp, -lim, lim)
            cont[k, CPT] = t_new
            dt_imp = t_new - t_old
            if dt_imp != 0.0:
                _apply_impulse(bodies, a, b, dt_imp * tx, dt_imp * ty, rax, ray, rbx, rby)


@njit(cache=True)
def solve_positions(bodies, walls, cont, slop, beta, max_correction, iterations):
    """Nonlinear Gauss-Seidel position correction; velocities are untouched."""
    nb = bodies.shape[0]
    x0 = np.empty(nb)
    y0 = np.empty(nb)
    t0 = np.empty(nb)
    for _ in range(iterations):
        n = detect_contacts(bodies, walls, 0.0, cont)
        if n == 0:
            return
        _prepare(bodies, cont, n)
        for i in range(nb):
            x0[i] = bodies[i, BX]
            y0[i] = bodies[i, BY]
            t0[i] = bodies[i, BTH]
        for k in range(n):
            a = int(cont[k, CA])
            b = int(cont[k, CB])
            nx, ny = cont[k, CNX], cont[k, CNY]
            rax, ray, rbx, rby = cont[k, CRAX], cont[k, CRAY], cont[k, CRBX], cont[k, CRBY]
            # linearised separation given the corrections applied so far this pass
            dax = bodies[a, BX] - x0[a] - (bodies[a, BTH] - t0[a]) * ray
            day = bodies[a, BY] - y0[a] + (bodies[a, BTH] - t0[a]) * rax
            dbx = 0.0
            dby = 0.0
            if b >= 0:
                dbx = bodies[b, BX] - x0[b] - (bodies[b, BTH] - t0[b]) * rby
                dby = bodies[b, BY] - y0[b] + (bodies[b, BTH] - t0[b]) * rbx
            sep = cont[k, CSEP] + (dbx - dax) * nx + (dby - day) * ny
            c = _clamp(beta * (sep + slop), -max_correction, 0.0)
            if c == 0.0:
                continue
            imp = -c * cont[k, CKN]
            px = imp * nx
            py = imp * ny
            bodies[a, BX] -= bodies[a, BINVM] * px
            bodies[a, BY] -= bodies[a, BINVM] * py
            bodies[a, BTH] -= bodies[a, BINVI] * _cross(rax, ray, px, py)
            if b >= 0:
                bodies[b, BX] += bodies[b, BINVM] * px
                bodies[b, BY] += bodies[b, BINVM] * py
                bodies[b, BTH] += bodies[b, BINVI] * _cross(rbx, rby, px, py)
    for i in range(nb):
        bodies[i, BTH] = wrap_angle(bodies[i, BTH])


@njit(cache=True)
def drive_robot(bodies, v_target, w_target, prm):
    """Acceleration-capped velocity tracking for the unicycle in row 0."""
    if bodies[0, BACTIVE] == 0.0:
        return
    dt = prm[P_DT]
    th = bodies[0, BTH]
    c = math.cos(th)
    s = math.sin(th)
    vx = bodies[0, BVX]
    vy = bodies[0, BVY]
    vf = vx * c + vy * s
    vl = -vx * s + vy * c
    dv = prm[P_ACCEL] * dt
    vf += _clamp(v_target - vf, -dv, dv)
    dl = prm[P_GRIP] * dt
    vl += _clamp(-vl, -dl, dl)
    bodies[0, BVX] = vf * c - vl * s
    bodies[0, BVY] = vf * s + vl * c
    dw = prm[P_ALPHA] * dt
    bodies[0, BW] += _clamp(w_target - bodies[0, BW], -dw, dw)


@njit(cache=True)
def mean_radius(hx, hy):
    """Mean distance of a uniform rectangle's area from its centre."""
    d = math.sqrt(hx * hx + hy * hy)
    return (d + hx * hx / (2.0 * hy) * math.log((hy + d) / hx)
            + hy * hy / (2.0 * hx) * math.log((hx + d) / hy)) / 3.0


@njit(cache=True)
def floor_friction(bodies, prm):
    """Coulomb floor friction for every movable body with a non-zero coefficient."""
    dt = prm[P_DT]
    g = prm[P_GRAVITY]
    for i in range(bodies.shape[0]):
        mu = bodies[i, BMU]
        if bodies[i, BACTIVE] == 0.0 or bodies[i, BINVM] == 0.0 or mu == 0.0:
            continue
        vx = bodies[i, BVX]
        vy = bodies[i, BVY]
        sp = math.sqrt(vx * vx + vy * vy)
        dv = mu * g * dt
        if sp <= dv:
            bodies[i, BVX] = 0.0
            bodies[i, BVY] = 0.0
        else:
            f = (sp - dv) / sp
            bodies[i, BVX] = vx * f
            bodies[i, BVY] = vy * f
        w = bodies[i, BW]
        dw = mu * g * mean_radius(bodies[i, BHX], bodies[i, BHY]) * dt * bodies[i, BMASS] * bodies[i, BINVI]
        if abs(w) <= dw:
            bodies[i, BW] = 0.0
        elif w > 0.0:
            bodies[i, BW] = w - dw
        else:
            bodies[i, BW] = w + dw


@njit(cache=True)
def integrate_positions(bodies, dt):
    for i in range(bodies.shape[0]):
        if bodies[i, BACTIVE] == 0.0 or bodies[i, BINVM] == 0.0:
            continue
        bodies[i, BX] += bodies[i, BVX] * dt
        bodies[i, BY] += bodies[i, BVY] * dt
        bodies[i, BTH] = wrap_angle(bodies[i, BTH] + bodies[i, BW] * dt)


@njit(cache=True)
def fill_report(bodies, walls, cont, report, touch):
    """OR contact flags into ``report`` and raise its penetration maximum."""
    n = detect_contacts(bodies, walls, touch, cont)
    pen = 0.0
    for k in range(n):
        a = int(cont[k, CA])
        b = int(cont[k, CB])
        sep = cont[k, CSEP]
        if -sep > pen:
            pen = -sep
        if b < 0:
            if a == 0:
                report[R_ROBOT_WALL] = 1.0
            else:
                report[R_BOX_WALL + a - 1] = 1.0
        elif a == 0:
            report[R_ROBOT_BOX + b - 1] = 1.0
    if pen > report[R_PENETRATION]:
        report[R_PENETRATION] = pen
    return pen


@njit(cache=True)
def substep(bodies, walls, v_target, w_target, prm, cont, report):
    dt = prm[P_DT]
    drive_robot(bodies, v_target, w_target, prm)
    floor_friction(bodies, prm)
    n = detect_contacts(bodies, walls, prm[P_MARGIN], cont)
    if n > 0:
        _prepare(bodies, cont, n)
        solve_velocities(bodies, cont, n, dt, prm[P_MU_CONTACT], int(prm[P_VEL_ITERS]))
        for k in range(n):
            if cont[k, CPN] > 0.0:
                a = int(cont[k, CA])
                b = int(cont[k, CB])
                if b < 0:
                    if a == 0:
                        report[R_ROBOT_WALL] = 1.0
                    else:
                        report[R_BOX_WALL + a - 1] = 1.0
                elif a == 0:
                    report[R_ROBOT_BOX + b - 1] = 1.0
    integrate_positions(bodies, dt)
    if n > 0:
        solve_positions(bodies, walls, cont, prm[P_SLOP], prm[P_BETA], prm[P_MAX_CORRECTION],
                        int(prm[P_POS_ITERS]))
        fill_report(bodies, walls, cont, report, prm[P_TOUCH])


@njit(cache=True)
def step_world_kernel(bodies, walls, v_target, w_target, n_substeps, prm, goal_x, goal_y, report):
    """Advance one world ``n_substeps`` times; ``report`` is reset first.

    ``report[R_GOAL_DIST]`` receives the minimum robot-to-goal distance seen
    at the end of any sub-step.
    """
    cont = np.empty((MAX_CONTACTS, NCF))
    report[:] = 0.0
    best = 1e300
    for _ in range(n_substeps):
        substep(bodies, walls, v_target, w_target, prm, cont, report)
        dx = bodies[0, BX] - goal_x
        dy = bodies[0, BY] - goal_y
        d = math.sqrt(dx * dx + dy * dy)
        if d < best:
            best = d
    report[R_GOAL_DIST] = best


@njit(cache=True)
def step_batch_kernel(bodies, walls, actions, n_substeps, prm, goals, reports):
    """Step every world of a batch; worlds never interact."""
    for e in range(bodies.shape[0]):
        step_world_kernel(bodies[e], walls[e], actions[e, 0], actions[e, 1], n_substeps, prm,
                          goals[e, 0], goals[e, 1], reports[e])


@njit(cache=True)
def min_separation(bodies, walls, cont):
    """Smallest signed separation over all current contacts (1e300 if none)."""
    n = detect_contacts(bodies, walls, 0.0, cont)
    best = 1e300
    for k in range(n):
        if cont[k, CSEP] < best:
            best = cont[k, CSEP]
    return best

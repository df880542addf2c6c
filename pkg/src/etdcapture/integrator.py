"""Numba-compiled Dormand-Prince 8(5,3) integrator with dense output.

One compiled core serves both dynamical models. The model is selected by an
integer ``kind`` and described by a flat parameter vector ``p`` plus a 2-D
table ``tab`` (ephemeris samples, unused by the CR3BP):

* ``KIND_CR3BP``: synodic CR3BP, ``p = [mu]``.
* ``KIND_EPH_ANALYTIC``: Earth-Moon-Sun N-body in the ETD-aligned Earth
  inertial frame, Moon on a Kepler orbit, Sun on a circle.
* ``KIND_EPH_TABLE``: same N-body field, Moon and Sun from a uniform table
  interpolated with cubic Hermite polynomials.

Ephemeris states are nondimensional (LU, TU, VU) with time measured from the
ETD epoch. Terminal conditions (collision, escape, energy sign stops) are
checked after every accepted step and localised on the dense interpolant.
"""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dc

KIND_CR3BP = 0
KIND_EPH_ANALYTIC = 1
KIND_EPH_TABLE = 2

STATUS_HORIZON = 0
STATUS_COLLISION = 1
STATUS_ESCAPE = 2
STATUS_INDETERMINATE = 3
STATUS_EPS_NEGATIVE = 4
STATUS_CAPTURE_END = 5

STOP_ESCAPE = 1
STOP_COLLISION = 2
STOP_EPS_NEGATIVE = 4
STOP_CAPTURE_END = 8

# parameter layout shared by both ephemeris kinds
P_GM_E, P_GM_M, P_GM_S = 0, 1, 2
# analytic: Moon Kepler block then Sun circle block
P_MOON = 3  # a, e, n, M0, Px, Py, Pz, Qx, Qy, Qz
P_SUN = 13  # radius, rate, phase0, Xx, Xy, Xz, Yx, Yy, Yz
N_ANALYTIC = 22
# table: tau0, dtau, n_rows; tab rows = tau, rM(3), vM(3), rS(3), vS(3)
P_TAB = 3
N_TABLE = 6

N_STAGES = _dc.N_STAGES
_A = np.ascontiguousarray(_dc.A[:N_STAGES, :N_STAGES])
_B = np.ascontiguousarray(_dc.B)
_C = np.ascontiguousarray(_dc.C[:N_STAGES])
_E3 = np.ascontiguousarray(_dc.E3)
_E5 = np.ascontiguousarray(_dc.E5)
_D = np.ascontiguousarray(_dc.D)
_A_EXTRA = np.ascontiguousarray(_dc.A[N_STAGES + 1 :])
_C_EXTRA = np.ascontiguousarray(_dc.C[N_STAGES + 1 :])
N_EXT = _dc.N_STAGES_EXTENDED
N_DENSE = _dc.INTERPOLATOR_POWER

_SAFE = 0.9
_SHRINK_MAX = 3.0  # h_new >= h / 3
_GROW_MAX = 6.0  # h_new <= 6 h
_BETA = 0.04
_EXPO1 = 1.0 / 8.0 - _BETA * 0.2


@njit(cache=True)
def _kepler_E(M, e):
    E = M if e < 0.8 else np.pi
    for _ in range(60):
        f = E - e * np.sin(E) - M
        d = 1.0 - e * np.cos(E)
        dE = f / d
        E -= dE
        if abs(dE) < 1e-15:
            break
    return E


@njit(cache=True)
def _body_states(kind, p, tab, t, rm, vm, rs, vs):
    """Moon and Sun nondimensional states at time t (ephemeris kinds only)."""
    if kind == KIND_EPH_ANALYTIC:
        a = p[P_MOON]
        e = p[P_MOON + 1]
        n = p[P_MOON + 2]
        M = p[P_MOON + 3] + n * t
        E = _kepler_E(M, e)
        cE = np.cos(E)
        sE = np.sin(E)
        sq = np.sqrt(1.0 - e * e)
        den = 1.0 - e * cE
        xp = a * (cE - e)
        yp = a * sq * sE
        vxp = -a * n * sE / den
        vyp = a * n * sq * cE / den
        for k in range(3):
            P = p[P_MOON + 4 + k]
            Q = p[P_MOON + 7 + k]
            rm[k] = xp * P + yp * Q
            vm[k] = vxp * P + vyp * Q
        R = p[P_SUN]
        w = p[P_SUN + 1]
        th = p[P_SUN + 2] + w * t
        c = np.cos(th)
        s = np.sin(th)
        for k in range(3):
            X = p[P_SUN + 3 + k]
            Y = p[P_SUN + 6 + k]
            rs[k] = R * (c * X + s * Y)
            vs[k] = R * w * (-s * X + c * Y)
    else:
        t0 = p[P_TAB]
        dt = p[P_TAB + 1]
        nrow = int(p[P_TAB + 2])
        u = (t - t0) / dt
        i = int(np.floor(u))
        if i < 0:
            i = 0
        if i > nrow - 2:
            i = nrow - 2
        s = u - i
        s2 = s * s
        s3 = s2 * s
        h00 = 2.0 * s3 - 3.0 * s2 + 1.0
        h10 = s3 - 2.0 * s2 + s
        h01 = -2.0 * s3 + 3.0 * s2
        h11 = s3 - s2
        d00 = (6.0 * s2 - 6.0 * s) / dt
        d10 = 3.0 * s2 - 4.0 * s + 1.0
        d01 = (-6.0 * s2 + 6.0 * s) / dt
        d11 = 3.0 * s2 - 2.0 * s
        for k in range(3):
            p0 = tab[i, 1 + k]
            m0 = tab[i, 4 + k]
            p1 = tab[i + 1, 1 + k]
            m1 = tab[i + 1, 4 + k]
            rm[k] = h00 * p0 + h10 * dt * m0 + h01 * p1 + h11 * dt * m1
            vm[k] = d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1
            p0 = tab[i, 7 + k]
            m0 = tab[i, 10 + k]
            p1 = tab[i + 1, 7 + k]
            m1 = tab[i + 1, 10 + k]
            rs[k] = h00 * p0 + h10 * dt * m0 + h01 * p1 + h11 * dt * m1
            vs[k] = d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1


@njit(cache=True)
def _rhs(kind, p, tab, t, y, out):
    if kind == KIND_CR3BP:
        mu = p[0]
        x = y[0]
        yy = y[1]
        z = y[2]
        dx1 = x + mu
        dx2 = x - 1.0 + mu
        rho = yy * yy + z * z
        r1 = np.sqrt(dx1 * dx1 + rho)
        r2 = np.sqrt(dx2 * dx2 + rho)
        k1 = (1.0 - mu) / (r1 * r1 * r1)
        k2 = mu / (r2 * r2 * r2)
        out[0] = y[3]
        out[1] = y[4]
        out[2] = y[5]
        out[3] = 2.0 * y[4] + x - k1 * dx1 - k2 * dx2
        out[4] = -2.0 * y[3] + yy - (k1 + k2) * yy
        out[5] = -(k1 + k2) * z
        return
    rm = np.empty(3)
    vm = np.empty(3)
    rs = np.empty(3)
    vs = np.empty(3)
    _body_states(kind, p, tab, t, rm, vm, rs, vs)
    gme = p[P_GM_E]
    gmm = p[P_GM_M]
    gms = p[P_GM_S]
    r = np.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
    dm0 = y[0] - rm[0]
    dm1 = y[1] - rm[1]
    dm2 = y[2] - rm[2]
    ds0 = y[0] - rs[0]
    ds1 = y[1] - rs[1]
    ds2 = y[2] - rs[2]
    rdm = np.sqrt(dm0 * dm0 + dm1 * dm1 + dm2 * dm2)
    rds = np.sqrt(ds0 * ds0 + ds1 * ds1 + ds2 * ds2)
    rmn = np.sqrt(rm[0] * rm[0] + rm[1] * rm[1] + rm[2] * rm[2])
    rsn = np.sqrt(rs[0] * rs[0] + rs[1] * rs[1] + rs[2] * rs[2])
    ke = gme / (r * r * r)
    km = gmm / (rdm * rdm * rdm)
    kmi = gmm / (rmn * rmn * rmn)
    ks = gms / (rds * rds * rds)
    ksi = gms / (rsn * rsn * rsn)
    out[0] = y[3]
    out[1] = y[4]
    out[2] = y[5]
    out[3] = -ke * y[0] - km * dm0 - kmi * rm[0] - ks * ds0 - ksi * rs[0]
    out[4] = -ke * y[1] - km * dm1 - kmi * rm[1] - ks * ds1 - ksi * rs[1]
    out[5] = -ke * y[2] - km * dm2 - kmi * rm[2] - ks * ds2 - ksi * rs[2]


@njit(cache=True)
def _moon_rel(kind, p, tab, t, y):
    """(r2, eps2, radial rate) of the state relative to the Moon."""
    if kind == KIND_CR3BP:
        mu = p[0]
        x2 = y[0] - 1.0 + mu
        y2 = y[1]
        z2 = y[2]
        r2 = np.sqrt(x2 * x2 + y2 * y2 + z2 * z2)
        vx = y[3] - y2
        vy = y[4] + x2
        vz = y[5]
        eps = 0.5 * (vx * vx + vy * vy + vz * vz) - mu / r2
        rdot = (x2 * y[3] + y2 * y[4] + z2 * y[5]) / r2
        return r2, eps, rdot
    rm = np.empty(3)
    vm = np.empty(3)
    rs = np.empty(3)
    vs = np.empty(3)
    _body_states(kind, p, tab, t, rm, vm, rs, vs)
    d0 = y[0] - rm[0]
    d1 = y[1] - rm[1]
    d2 = y[2] - rm[2]
    w0 = y[3] - vm[0]
    w1 = y[4] - vm[1]
    w2 = y[5] - vm[2]
    r2 = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    eps = 0.5 * (w0 * w0 + w1 * w1 + w2 * w2) - p[P_GM_M] / r2
    rdot = (d0 * w0 + d1 * w1 + d2 * w2) / r2
    return r2, eps, rdot


@njit(cache=True)
def _dense_eval(F, y_old, x, out):
    for j in range(6):
        acc = F[6, j]
        acc = acc * x
        acc = (acc + F[5, j]) * (1.0 - x)
        acc = (acc + F[4, j]) * x
        acc = (acc + F[3, j]) * (1.0 - x)
        acc = (acc + F[2, j]) * x
        acc = (acc + F[1, j]) * (1.0 - x)
        acc = (acc + F[0, j]) * x
        out[j] = y_old[j] + acc


@njit(cache=True)
def _event_value(which, level, kind, p, tab, t, y):
    r2, eps, rdot = _moon_rel(kind, p, tab, t, y)
    if which == 0:
        return r2 - level
    if which == 1:
        return eps
    return rdot


@njit(cache=True)
def _localize(which, level, kind, p, tab, F, y_old, t_old, h, xa, xb, fa):
    """Bisection on the dense interpolant; returns the fractional step position."""
    ytmp = np.empty(6)
    for _ in range(80):
        xm = 0.5 * (xa + xb)
        if xm == xa or xm == xb:
            break
        _dense_eval(F, y_old, xm, ytmp)
        fm = _event_value(which, level, kind, p, tab, t_old + xm * h, ytmp)
        if (fm > 0.0) == (fa > 0.0):
            xa = xm
            fa = fm
        else:
            xb = xm
    return xb


@njit(cache=True)
def _error_norm(K, h, y, y_new, rtol, atol):
    e5 = 0.0
    e3 = 0.0
    for j in range(6):
        sc = atol + max(abs(y[j]), abs(y_new[j])) * rtol
        s5 = 0.0
        s3 = 0.0
        for s in range(N_STAGES + 1):
            s5 += K[s, j] * _E5[s]
            s3 += K[s, j] * _E3[s]
        s5 /= sc
        s3 /= sc
        e5 += s5 * s5
        e3 += s3 * s3
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * 6.0)


@njit(cache=True)
def _initial_step(kind, p, tab, t0, y0, f0, direction, rtol, atol, max_step):
    d0 = 0.0
    d1 = 0.0
    for j in range(6):
        sc = atol + abs(y0[j]) * rtol
        d0 += (y0[j] / sc) ** 2
        d1 += (f0[j] / sc) ** 2
    d0 = np.sqrt(d0 / 6.0)
    d1 = np.sqrt(d1 / 6.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = np.empty(6)
    for j in range(6):
        y1[j] = y0[j] + direction * h0 * f0[j]
    f1 = np.empty(6)
    _rhs(kind, p, tab, t0 + direction * h0, y1, f1)
    d2 = 0.0
    for j in range(6):
        sc = atol + abs(y0[j]) * rtol
        d2 += ((f1[j] - f0[j]) / sc) ** 2
    d2 = np.sqrt(d2 / 6.0) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, max_step)


@njit(cache=True)
def integrate(kind, p, tab, t0, y0, t_end, rtol, atol, max_step, r_coll, r2_lim, stop_flags, max_nodes):
    """Integrate from t0 to t_end (either direction).

    Returns ``(ts, ys, Fs, n_nodes, status, t_stop)``: node times, node states,
    per-step dense coefficients (step i spans nodes i and i+1), the node count,
    the terminal status code and the time at which the trajectory ends.
    """
    direction = 1.0 if t_end >= t0 else -1.0
    span = abs(t_end - t0)
    cap = 1024
    ts = np.empty(cap)
    ys = np.empty((cap, 6))
    Fs = np.empty((cap, N_DENSE, 6))
    ts[0] = t0
    for j in range(6):
        ys[0, j] = y0[j]
    n = 1
    if span == 0.0:
        return ts[:1].copy(), ys[:1].copy(), Fs[:0].copy(), 1, STATUS_HORIZON, t0

    K = np.empty((N_EXT, 6))
    y = y0.copy()
    y_new = np.empty(6)
    ytmp = np.empty(6)
    f = np.empty(6)
    f_new = np.empty(6)
    F = np.empty((N_DENSE, 6))
    _rhs(kind, p, tab, t0, y, f)
    h_abs = _initial_step(kind, p, tab, t0, y, f, direction, rtol, atol, max_step)
    t = t0
    facold = 1e-4
    rejected = False
    status = STATUS_HORIZON
    t_stop = t_end

    r2, eps, rdot = _moon_rel(kind, p, tab, t, y)
    seen_negative = eps < 0.0

    while True:
        remaining = abs(t_end - t)
        if remaining <= 0.0:
            break
        min_step = 1e-13 * max(1.0, abs(t))
        if h_abs < min_step:
            status = STATUS_INDETERMINATE
            t_stop = t
            break
        if n >= max_nodes:
            status = STATUS_INDETERMINATE
            t_stop = t
            break
        last = False
        if h_abs >= remaining:
            h_abs = remaining
            last = True
        h = direction * h_abs

        for j in range(6):
            K[0, j] = f[j]
        for s in range(1, N_STAGES):
            for j in range(6):
                acc = 0.0
                for q in range(s):
                    acc += _A[s, q] * K[q, j]
                ytmp[j] = y[j] + h * acc
            _rhs(kind, p, tab, t + _C[s] * h, ytmp, K[s])
        for j in range(6):
            acc = 0.0
            for q in range(N_STAGES):
                acc += _B[q] * K[q, j]
            y_new[j] = y[j] + h * acc
        t_new = t_end if last else t + h
        _rhs(kind, p, tab, t_new, y_new, f_new)
        for j in range(6):
            K[N_STAGES, j] = f_new[j]

        err = _error_norm(K, h, y, y_new, rtol, atol)
        if not np.isfinite(err):
            h_abs *= 0.2
            rejected = True
            continue
        if err > 1.0:
            fac11 = err ** _EXPO1
            h_abs = h_abs / min(_SHRINK_MAX, fac11 / _SAFE)
            rejected = True
            continue

        # accepted: dense output coefficients
        for s in range(N_STAGES + 1, N_EXT):
            idx = s - N_STAGES - 1
            for j in range(6):
                acc = 0.0
                for q in range(s):
                    acc += _A_EXTRA[idx, q] * K[q, j]
                ytmp[j] = y[j] + h * acc
            _rhs(kind, p, tab, t + _C_EXTRA[idx] * h, ytmp, K[s])
        for j in range(6):
            dy = y_new[j] - y[j]
            F[0, j] = dy
            F[1, j] = h * f[j] - dy
            F[2, j] = 2.0 * dy - h * (f_new[j] + f[j])
            for r in range(4):
                acc = 0.0
                for s in range(N_EXT):
                    acc += _D[r, s] * K[s, j]
                F[3 + r, j] = h * acc

        if n >= cap:
            cap *= 2
            ts2 = np.empty(cap)
            ys2 = np.empty((cap, 6))
            Fs2 = np.empty((cap, N_DENSE, 6))
            ts2[:n] = ts[:n]
            ys2[:n] = ys[:n]
            Fs2[: n - 1] = Fs[: n - 1]
            ts = ts2
            ys = ys2
            Fs = Fs2
        ts[n] = t_new
        for j in range(6):
            ys[n, j] = y_new[j]
            for r in range(N_DENSE):
                Fs[n - 1, r, j] = F[r, j]
        n += 1

        # terminal events inside [t, t_new]; the earliest one wins
        r2n, epsn, rdotn = _moon_rel(kind, p, tab, t_new, y_new)
        x_ev = 2.0
        st_ev = STATUS_HORIZON
        if stop_flags & STOP_COLLISION:
            if r2n <= r_coll:
                x = _localize(0, r_coll, kind, p, tab, F, y, t, h, 0.0, 1.0, r2 - r_coll)
                if x < x_ev:
                    x_ev = x
                    st_ev = STATUS_COLLISION
            elif (rdot < 0.0) == (direction > 0.0) and (rdotn > 0.0) == (direction > 0.0):
                # closest approach inside the step
                xp = _localize(2, 0.0, kind, p, tab, F, y, t, h, 0.0, 1.0, rdot)
                _dense_eval(F, y, xp, ytmp)
                rp, _e, _r = _moon_rel(kind, p, tab, t + xp * h, ytmp)
                if rp <= r_coll:
                    x = _localize(0, r_coll, kind, p, tab, F, y, t, h, 0.0, xp, r2 - r_coll)
                    if x < x_ev:
                        x_ev = x
                        st_ev = STATUS_COLLISION
        if stop_flags & STOP_ESCAPE:
            if r2n >= r2_lim and epsn > 0.0:
                if r2 < r2_lim:
                    x = _localize(0, r2_lim, kind, p, tab, F, y, t, h, 0.0, 1.0, r2 - r2_lim)
                else:
                    x = 0.0
                if x < x_ev:
                    x_ev = x
                    st_ev = STATUS_ESCAPE
        if stop_flags & STOP_EPS_NEGATIVE:
            if epsn < 0.0:
                x = _localize(1, 0.0, kind, p, tab, F, y, t, h, 0.0, 1.0, eps) if eps > 0.0 else 0.0
                if x < x_ev:
                    x_ev = x
                    st_ev = STATUS_EPS_NEGATIVE
        if stop_flags & STOP_CAPTURE_END:
            if seen_negative and epsn > 0.0:
                x = _localize(1, 0.0, kind, p, tab, F, y, t, h, 0.0, 1.0, eps) if eps < 0.0 else 0.0
                if x < x_ev:
                    x_ev = x
                    st_ev = STATUS_CAPTURE_END
        if epsn < 0.0:
            seen_negative = True
        if st_ev != STATUS_HORIZON:
            status = st_ev
            t_stop = t + x_ev * h
            if x_ev >= 1.0:
                t_stop = t_new
            break

        # PI step-size update
        fac11 = err ** _EXPO1 if err > 0.0 else 0.0
        if fac11 > 0.0:
            fac = fac11 / facold ** _BETA
            fac = max(1.0 / _GROW_MAX, min(_SHRINK_MAX, fac / _SAFE))
            h_next = h_abs / fac
        else:
            h_next = h_abs * _GROW_MAX
        if rejected:
            h_next = min(h_next, h_abs)
        facold = max(err, 1e-4)
        rejected = False

        t = t_new
        for j in range(6):
            y[j] = y_new[j]
            f[j] = f_new[j]
        r2, eps, rdot = r2n, epsn, rdotn
        if last:
            break
        h_abs = min(h_next, max_step)

    return ts[:n].copy(), ys[:n].copy(), Fs[: n - 1].copy(), n, status, t_stop


@njit(cache=True)
def dense_eval_many(ts, ys, Fs, n_nodes, tq, out):
    """Evaluate the piecewise interpolant at query times tq (any order)."""
    forward = ts[n_nodes - 1] >= ts[0]
    for qi in range(tq.shape[0]):
        tv = tq[qi]
        lo = 0
        hi = n_nodes - 1
        # binary search for the step that contains tv
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if (ts[mid] <= tv) == forward:
                lo = mid
            else:
                hi = mid
        if n_nodes == 1:
            for j in range(6):
                out[qi, j] = ys[0, j]
            continue
        h = ts[lo + 1] - ts[lo]
        x = (tv - ts[lo]) / h
        _dense_eval(Fs[lo], ys[lo], x, out[qi])


@njit(cache=True)
def moon_rel_many(kind, p, tab, tq, yq, out):
    for i in range(tq.shape[0]):
        r2, eps, rdot = _moon_rel(kind, p, tab, tq[i], yq[i])
        out[i, 0] = r2
        out[i, 1] = eps
        out[i, 2] = rdot


@njit(cache=True)
def body_states_many(kind, p, tab, tq, out):
    rm = np.empty(3)
    vm = np.empty(3)
    rs = np.empty(3)
    vs = np.empty(3)
    for i in range(tq.shape[0]):
        _body_states(kind, p, tab, tq[i], rm, vm, rs, vs)
        for k in range(3):
            out[i, k] = rm[k]
            out[i, 3 + k] = vm[k]
            out[i, 6 + k] = rs[k]
            out[i, 9 + k] = vs[k]


@njit(cache=True)
def rhs_once(kind, p, tab, t, y):
    out = np.empty(6)
    _rhs(kind, p, tab, t, y, out)
    return out


EMPTY_TABLE = np.zeros((1, 1))

"""Pure-Python twins of the compiled kernels.

Each function mirrors ``_ckernels`` operation by operation so that both
backends produce the same trajectories from the same uniforms.
"""
from __future__ import annotations

import math

import numpy as np

IBM_TSTOP = 0
IBM_MUTATION = 1
IBM_REFILL = 2
IBM_EXTINCT = 3
IBM_MAXEVENTS = 4
IBM_LOGFULL = 5

MAXD = 64


def ibm_run(counts, birth, death0, mutp, comp, alpha_t, n, K, t, t_stop,
            unif, pos, max_events, log_t, log_kind, log_slot, log_pos):
    """Run exact Gillespie events in place.

    Parameters
    ----------
    counts, birth, death0, mutp, comp : ndarray
        Per-class individual counts, birth rate, natural death rate,
        per-birth mutation probability and competition sum
        ``sum_j alpha(x_i, x_j) counts_j``.
    alpha_t : ndarray
        ``alpha_t[i, j] = alpha(x_j, x_i)``; row ``i`` is the change in every
        competition sum when one individual of class ``i`` appears.
    n : int
        Number of class slots in use.
    unif : ndarray
        Pre-drawn uniforms on [0, 1); ``pos`` is the read cursor.

    Returns
    -------
    tuple
        ``(status, t, pos, n_events, slot, log_pos)``. ``slot`` is the parent
        class when ``status == IBM_MUTATION``; the time is then already set to
        the mutation event and counts are untouched.
    """
    nunif = unif.shape[0]
    log_cap = log_t.shape[0]
    n_events = 0
    rates = np.empty(2 * n)
    while True:
        if n_events >= max_events:
            return IBM_MAXEVENTS, t, pos, n_events, -1, log_pos
        if log_cap > 0 and log_pos >= log_cap:
            return IBM_LOGFULL, t, pos, n_events, -1, log_pos
        if pos + 3 > nunif:
            return IBM_REFILL, t, pos, n_events, -1, log_pos
        c = counts[:n]
        rates[0::2] = c * birth[:n]
        rates[1::2] = c * (death0[:n] + comp[:n] / K)
        cs = np.cumsum(rates)
        R = float(cs[-1]) if n > 0 else 0.0
        if R <= 0.0:
            return IBM_EXTINCT, t, pos, n_events, -1, log_pos
        u1 = float(unif[pos])
        u2 = float(unif[pos + 1])
        pos += 2
        dt = -math.log(1.0 - u1) / R
        if t + dt > t_stop:
            return IBM_TSTOP, t_stop, pos, n_events, -1, log_pos
        t = t + dt
        target = u2 * R
        idx = int(np.searchsorted(cs, target, side="right"))
        if idx >= 2 * n:
            alive = np.flatnonzero(c > 0)
            idx = 2 * int(alive[-1]) + 1
        sel = idx // 2
        is_birth = idx % 2 == 0
        if is_birth:
            u3 = float(unif[pos])
            pos += 1
            if u3 < mutp[sel]:
                return IBM_MUTATION, t, pos, n_events, sel, log_pos
            counts[sel] += 1
            comp[:n] += alpha_t[sel, :n]
        else:
            counts[sel] -= 1
            comp[:n] -= alpha_t[sel, :n]
        if log_cap > 0:
            log_t[log_pos] = t
            log_kind[log_pos] = 0 if is_birth else 2
            log_slot[log_pos] = sel
            log_pos += 1
        n_events += 1


A21 = 1.0 / 5.0
A31 = 3.0 / 40.0
A32 = 9.0 / 40.0
A41 = 44.0 / 45.0
A42 = -56.0 / 15.0
A43 = 32.0 / 9.0
A51 = 19372.0 / 6561.0
A52 = -25360.0 / 2187.0
A53 = 64448.0 / 6561.0
A54 = -212.0 / 729.0
A61 = 9017.0 / 3168.0
A62 = -355.0 / 33.0
A63 = 46732.0 / 5247.0
A64 = 49.0 / 176.0
A65 = -5103.0 / 18656.0
B1 = 35.0 / 384.0
B3 = 500.0 / 1113.0
B4 = 125.0 / 192.0
B5 = -2187.0 / 6784.0
B6 = 11.0 / 84.0
E1 = 71.0 / 57600.0
E3 = -71.0 / 16695.0
E4 = 71.0 / 1920.0
E5 = -17253.0 / 339200.0
E6 = 22.0 / 525.0
E7 = -1.0 / 40.0


def _lv_rhs(d, r, A, y):
    out = [0.0] * d
    for i in range(d):
        s = 0.0
        Ai = A[i]
        for j in range(d):
            s += Ai[j] * y[j]
        out[i] = y[i] * (r[i] - s)
    return out


def lv_advance(r, A, n, t, t_end, h, atol, rtol, cert_center, cert_P,
               cert_level, out_min, out_max, max_steps):
    """Advance ``n' = n * (r - A n)`` from ``t`` towards ``t_end`` in place.

    Dormand-Prince 5(4) with RMS error control; steps that would make a
    coordinate negative are rejected. After each accepted step the state is
    tested against quadratic basin certificates ``(x-c)^T P (x-c) < level``.

    Returns
    -------
    tuple
        ``(status, t, h, nsteps, which)`` with status 0 (reached ``t_end``),
        1 (entered certificate ``which``), 2 (step-size underflow) or
        3 (step budget exhausted).
    """
    d = n.shape[0]
    m = cert_level.shape[0]
    if d > MAXD:
        raise ValueError("dimension exceeds compiled limit")
    r = [float(v) for v in r]
    A = [[float(v) for v in row] for row in A]
    y = [float(v) for v in n]
    centers = [[float(v) for v in row] for row in cert_center]
    Ps = [[[float(v) for v in row] for row in P] for P in cert_P]
    levels = [float(v) for v in cert_level]
    k1 = _lv_rhs(d, r, A, y)
    nsteps = 0
    rng_d = range(d)
    while True:
        if t >= t_end:
            break
        if nsteps >= max_steps:
            n[:] = y
            return 3, t, h, nsteps, -1
        hs = h
        last = False
        if t + hs >= t_end:
            hs = t_end - t
            last = True
        if hs < 1e-14 * (abs(t) if abs(t) > 1.0 else 1.0) and not last:
            n[:] = y
            return 2, t, h, nsteps, -1
        ys = [y[i] + hs * (A21 * k1[i]) for i in rng_d]
        k2 = _lv_rhs(d, r, A, ys)
        ys = [y[i] + hs * (A31 * k1[i] + A32 * k2[i]) for i in rng_d]
        k3 = _lv_rhs(d, r, A, ys)
        ys = [y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in rng_d]
        k4 = _lv_rhs(d, r, A, ys)
        ys = [y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
              for i in rng_d]
        k5 = _lv_rhs(d, r, A, ys)
        ys = [y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                           + A65 * k5[i]) for i in rng_d]
        k6 = _lv_rhs(d, r, A, ys)
        yn = [y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i]
                           + B6 * k6[i]) for i in rng_d]
        k7 = _lv_rhs(d, r, A, yn)
        s = 0.0
        neg = False
        for i in rng_d:
            e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                      + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * (abs(y[i]) if abs(y[i]) > abs(yn[i]) else abs(yn[i]))
            s += (e / sc) * (e / sc)
            if yn[i] < 0.0:
                neg = True
        err = math.sqrt(s / d)
        if err <= 1.0 and not neg:
            t = t_end if last else t + hs
            for i in rng_d:
                if yn[i] < out_min[i]:
                    out_min[i] = yn[i]
                if yn[i] > out_max[i]:
                    out_max[i] = yn[i]
            y = yn
            k1 = k7
            nsteps += 1
            if err == 0.0:
                fac = 10.0
            else:
                fac = min(10.0, max(0.2, 0.9 * math.pow(err, -0.2)))
            if last:
                if hs * fac > h:
                    h = hs * fac
            else:
                h = hs * fac
            for q in range(m):
                c = centers[q]
                P = Ps[q]
                v = 0.0
                for i in rng_d:
                    ei = y[i] - c[i]
                    Pi = P[i]
                    for j in rng_d:
                        v += ei * Pi[j] * (y[j] - c[j])
                if v < levels[q]:
                    n[:] = y
                    return 1, t, h, nsteps, q
        else:
            if neg and err <= 1.0:
                fac = 0.5
            else:
                fac = max(0.2, 0.9 * math.pow(err, -0.2))
                if neg and fac > 0.5:
                    fac = 0.5
            h = hs * fac
    n[:] = y
    return 0, t, h, nsteps, -1

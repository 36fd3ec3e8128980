# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: exact Gillespie events and Dormand-Prince LV integration.

Every routine here has a line-for-line twin in ``_pykernels``; the two must
perform the same floating-point operations in the same order.
"""
from libc.math cimport log, sqrt, pow, fabs

DEF MAXD = 64

# status codes shared with _pykernels
cdef int IBM_TSTOP = 0
cdef int IBM_MUTATION = 1
cdef int IBM_REFILL = 2
cdef int IBM_EXTINCT = 3
cdef int IBM_MAXEVENTS = 4
cdef int IBM_LOGFULL = 5


def ibm_run(long long[::1] counts, double[::1] birth, double[::1] death0,
            double[::1] mutp, double[::1] comp, double[:, ::1] alpha_t,
            Py_ssize_t n, double K, double t, double t_stop,
            double[::1] unif, Py_ssize_t pos, long long max_events,
            double[::1] log_t, signed char[::1] log_kind, long long[::1] log_slot,
            Py_ssize_t log_pos):
    """Run Gillespie events until a stop condition; see ``_pykernels.ibm_run``."""
    cdef Py_ssize_t nunif = unif.shape[0]
    cdef Py_ssize_t log_cap = log_t.shape[0]
    cdef long long n_events = 0
    cdef Py_ssize_t i, j, sel, last
    cdef double R, acc, rb, rd, u1, u2, u3, dt, target
    cdef long long c
    cdef int is_birth
    while True:
        if n_events >= max_events:
            return IBM_MAXEVENTS, t, pos, n_events, -1, log_pos
        if log_cap > 0 and log_pos >= log_cap:
            return IBM_LOGFULL, t, pos, n_events, -1, log_pos
        if pos + 3 > nunif:
            return IBM_REFILL, t, pos, n_events, -1, log_pos
        R = 0.0
        last = -1
        for i in range(n):
            c = counts[i]
            if c > 0:
                R += c * birth[i]
                R += c * (death0[i] + comp[i] / K)
                last = i
        if R <= 0.0:
            return IBM_EXTINCT, t, pos, n_events, -1, log_pos
        u1 = unif[pos]
        u2 = unif[pos + 1]
        pos += 2
        dt = -log(1.0 - u1) / R
        if t + dt > t_stop:
            return IBM_TSTOP, t_stop, pos, n_events, -1, log_pos
        t = t + dt
        target = u2 * R
        acc = 0.0
        sel = -1
        is_birth = 0
        for i in range(n):
            c = counts[i]
            if c > 0:
                rb = c * birth[i]
                rd = c * (death0[i] + comp[i] / K)
                acc += rb
                if target < acc:
                    sel = i
                    is_birth = 1
                    break
                acc += rd
                if target < acc:
                    sel = i
                    is_birth = 0
                    break
        if sel < 0:
            # rounding put target at the very top; take the last death channel
            sel = last
            is_birth = 0
        if is_birth:
            u3 = unif[pos]
            pos += 1
            if u3 < mutp[sel]:
                return IBM_MUTATION, t, pos, n_events, sel, log_pos
            counts[sel] += 1
            for j in range(n):
                comp[j] += alpha_t[sel, j]
        else:
            counts[sel] -= 1
            for j in range(n):
                comp[j] -= alpha_t[sel, j]
        if log_cap > 0:
            log_t[log_pos] = t
            log_kind[log_pos] = 0 if is_birth else 2
            log_slot[log_pos] = sel
            log_pos += 1
        n_events += 1


# Dormand-Prince 5(4) tableau
cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0
cdef double A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0
cdef double A42 = -56.0 / 15.0
cdef double A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0
cdef double A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0
cdef double A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0
cdef double A62 = -355.0 / 33.0
cdef double A63 = 46732.0 / 5247.0
cdef double A64 = 49.0 / 176.0
cdef double A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0
cdef double B3 = 500.0 / 1113.0
cdef double B4 = 125.0 / 192.0
cdef double B5 = -2187.0 / 6784.0
cdef double B6 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0
cdef double E3 = -71.0 / 16695.0
cdef double E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0
cdef double E6 = 22.0 / 525.0
cdef double E7 = -1.0 / 40.0


cdef inline void _lv_rhs(Py_ssize_t d, double[::1] r, double[:, ::1] A,
                         double* y, double* out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += A[i, j] * y[j]
        out[i] = y[i] * (r[i] - s)


def lv_advance(double[::1] r, double[:, ::1] A, double[::1] n, double t,
               double t_end, double h, double atol, double rtol,
               double[:, ::1] cert_center, double[:, :, ::1] cert_P,
               double[::1] cert_level, double[::1] out_min, double[::1] out_max,
               long long max_steps):
    """Advance LV dynamics from t to t_end; see ``_pykernels.lv_advance``."""
    cdef Py_ssize_t d = n.shape[0]
    cdef Py_ssize_t m = cert_level.shape[0]
    cdef double y[MAXD]
    cdef double yn[MAXD]
    cdef double ys[MAXD]
    cdef double k1[MAXD]
    cdef double k2[MAXD]
    cdef double k3[MAXD]
    cdef double k4[MAXD]
    cdef double k5[MAXD]
    cdef double k6[MAXD]
    cdef double k7[MAXD]
    cdef Py_ssize_t i, j, q
    cdef long long nsteps = 0
    cdef double hs, s, e, sc, err, fac, v, ei
    cdef int last, neg
    if d > MAXD:
        raise ValueError("dimension exceeds compiled limit")
    for i in range(d):
        y[i] = n[i]
    _lv_rhs(d, r, A, y, k1)
    while True:
        if t >= t_end:
            break
        if nsteps >= max_steps:
            for i in range(d):
                n[i] = y[i]
            return 3, t, h, nsteps, -1
        hs = h
        last = 0
        if t + hs >= t_end:
            hs = t_end - t
            last = 1
        if hs < 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0) and not last:
            for i in range(d):
                n[i] = y[i]
            return 2, t, h, nsteps, -1
        for i in range(d):
            ys[i] = y[i] + hs * (A21 * k1[i])
        _lv_rhs(d, r, A, ys, k2)
        for i in range(d):
            ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
        _lv_rhs(d, r, A, ys, k3)
        for i in range(d):
            ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _lv_rhs(d, r, A, ys, k4)
        for i in range(d):
            ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        _lv_rhs(d, r, A, ys, k5)
        for i in range(d):
            ys[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        _lv_rhs(d, r, A, ys, k6)
        for i in range(d):
            yn[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        _lv_rhs(d, r, A, yn, k7)
        s = 0.0
        neg = 0
        for i in range(d):
            e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * (fabs(y[i]) if fabs(y[i]) > fabs(yn[i]) else fabs(yn[i]))
            s += (e / sc) * (e / sc)
            if yn[i] < 0.0:
                neg = 1
        err = sqrt(s / d)
        if err <= 1.0 and not neg:
            if last:
                t = t_end
            else:
                t = t + hs
            for i in range(d):
                if yn[i] < out_min[i]:
                    out_min[i] = yn[i]
                if yn[i] > out_max[i]:
                    out_max[i] = yn[i]
                y[i] = yn[i]
                k1[i] = k7[i]
            nsteps += 1
            if err == 0.0:
                fac = 10.0
            else:
                fac = 0.9 * pow(err, -0.2)
                if fac > 10.0:
                    fac = 10.0
                if fac < 0.2:
                    fac = 0.2
            if last:
                if hs * fac > h:
                    h = hs * fac
            else:
                h = hs * fac
            for q in range(m):
                v = 0.0
                for i in range(d):
                    ei = y[i] - cert_center[q, i]
                    for j in range(d):
                        v += ei * cert_P[q, i, j] * (y[j] - cert_center[q, j])
                if v < cert_level[q]:
                    for i in range(d):
                        n[i] = y[i]
                    return 1, t, h, nsteps, q
        else:
            if neg and err <= 1.0:
                fac = 0.5
            else:
                fac = 0.9 * pow(err, -0.2)
                if fac < 0.2:
                    fac = 0.2
                if neg and fac > 0.5:
                    fac = 0.5
            h = hs * fac
    for i in range(d):
        n[i] = y[i]
    return 0, t, h, nsteps, -1

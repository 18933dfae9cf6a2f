# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepping core.

Line-for-line translation of fallback.py: same state layout, same operation
order, same libm calls, so both backends produce bitwise-identical paths.
See fallback.py for the status-code and layout documentation.
"""

from libc.math cimport exp, log, pow, sqrt, isfinite
from libc.stdlib cimport free, malloc

OK = 0
AFFINE_BAIL = 1
DIVERGED = 2
NONFINITE = 3
FLOOR_HIT = 4

FAMILY_LV = 1
FAMILY_SIR = 2
FAMILY_CHEMOSTAT = 3
FAMILY_REPLICATOR = 4

cdef enum:
    C_OK = 0
    C_BAIL = 1
    C_DIV = 2
    C_NF = 3
    C_FLOOR = 4
    C_LV = 1
    C_SIR = 2
    C_CHEM = 3
    C_REPL = 4


cdef inline double _tap(double[:, ::1] hist, Py_ssize_t head, Py_ssize_t L,
                        Py_ssize_t kr, double fr, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t ka = head - kr
    cdef Py_ssize_t kb
    if ka < 0:
        ka += L
    if fr == 0.0:
        return hist[ka, i]
    kb = head - kr - 1
    if kb < 0:
        kb += L
    return (1.0 - fr) * hist[ka, i] + fr * hist[kb, i]


cdef inline void _rates(int fam, double[::1] scal, double[::1] vec,
                        double[::1] vec2, double[:, ::1] mat,
                        double[:, ::1] mat2, Py_ssize_t n,
                        double *x0, double *xr,
                        double *b, double *f, double *g) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc, phi, favg, total
    if fam == C_LV:
        for i in range(n):
            acc = vec[i]
            for j in range(n):
                acc = acc - mat[i, j] * x0[j]
            for j in range(n):
                acc = acc - mat2[i, j] * xr[j]
            b[i] = 0.0
            f[i] = acc
            g[i] = 1.0
    elif fam == C_SIR:
        if n == 2:
            b[0] = scal[0] - scal[4] * x0[1] * xr[0]
            f[0] = -scal[1] - scal[3] * x0[1]
            b[1] = 0.0
            f[1] = -scal[2] + scal[3] * x0[0] + scal[4] * xr[0]
            g[0] = 1.0
            g[1] = 1.0
        else:
            b[0] = scal[0]
            f[0] = -scal[1]
            g[0] = 1.0
    elif fam == C_CHEM:
        acc = -1.0
        for i in range(n - 1):
            acc = acc - x0[i + 1] * vec[i] / (vec2[i] + x0[0])
        b[0] = 1.0 + scal[0] * xr[0]
        f[0] = acc
        g[0] = 1.0
        for i in range(n - 1):
            b[i + 1] = 0.0
            f[i + 1] = vec[i] * xr[0] / (vec2[i] + xr[0]) - 1.0
            g[i + 1] = 1.0
    elif fam == C_REPL:
        total = scal[0]
        favg = 0.0
        for i in range(n):
            phi = 0.0
            for j in range(n):
                phi = phi + mat[i, j] * xr[j]
            f[i] = phi
            favg = favg + x0[i] * phi
        favg = favg / total
        for i in range(n):
            b[i] = 0.0
            f[i] = f[i] - favg
            g[i] = vec[i]


cdef inline void _log_step_copy(int fam, double[::1] scal, double[::1] vec,
                                double[::1] vec2, double[:, ::1] mat,
                                double[:, ::1] mat2, double[::1] sig_diag,
                                double[:, ::1] hist, Py_ssize_t head,
                                double[::1] y, Py_ssize_t L, Py_ssize_t n,
                                Py_ssize_t kr, double fr, double dt,
                                double[:, ::1] dE, Py_ssize_t row,
                                double *x0, double *xr,
                                double *b, double *f, double *g) noexcept nogil:
    """One uncoupled log-space step of a single fully-Kolmogorov copy."""
    cdef Py_ssize_t i, j
    cdef double total, favg, s2, mnoise, phi, sx, q, gi
    for i in range(n):
        x0[i] = hist[head, i]
        xr[i] = _tap(hist, head, L, kr, fr, i)
    if fam == C_REPL:
        total = scal[0]
        favg = 0.0
        s2 = 0.0
        mnoise = 0.0
        for i in range(n):
            phi = 0.0
            for j in range(n):
                phi = phi + mat[i, j] * xr[j]
            f[i] = phi
            favg = favg + x0[i] * phi
            sx = vec[i] * x0[i] / total
            s2 = s2 + sx * sx
            mnoise = mnoise + vec[i] * x0[i] * dE[row, i]
        favg = favg / total
        mnoise = mnoise / total
        for i in range(n):
            q = vec[i] * vec[i] * (1.0 - 2.0 * x0[i] / total) + s2
            y[i] = (y[i]
                    + (f[i] - favg - 0.5 * q) * dt
                    + vec[i] * dE[row, i]
                    - mnoise)
    else:
        _rates(fam, scal, vec, vec2, mat, mat2, n, x0, xr, b, f, g)
        for i in range(n):
            gi = g[i]
            y[i] = (y[i]
                    + (f[i] - 0.5 * sig_diag[i] * gi * gi) * dt
                    + gi * dE[row, i])


cdef inline int _commit(double[:, ::1] hist, Py_ssize_t head, double[::1] y,
                        Py_ssize_t L, Py_ssize_t n, double guard2,
                        double floor) noexcept nogil:
    cdef Py_ssize_t i
    cdef double ss = 0.0, v
    for i in range(n):
        v = exp(y[i])
        if not isfinite(v):
            return C_NF
        if v <= floor:
            return C_FLOOR
        ss = ss + v * v
    if ss > guard2:
        return C_DIV
    return C_OK


cdef inline void _renorm(double[:, ::1] hist, Py_ssize_t head, double[::1] y,
                         Py_ssize_t n, double total) noexcept nogil:
    cdef Py_ssize_t i
    cdef double ssum = 0.0, c, lc
    for i in range(n):
        ssum = ssum + hist[head, i]
    c = total / ssum
    lc = log(c)
    for i in range(n):
        hist[head, i] = hist[head, i] * c
        y[i] = y[i] + lc


def advance(int fam, double[::1] scal, double[::1] vec, double[::1] vec2,
            double[:, ::1] mat, double[:, ::1] mat2,
            unsigned char[::1] kol, double[::1] sig_diag,
            double[:, ::1] hist, Py_ssize_t head, double[::1] y,
            Py_ssize_t kr, double fr, double dt,
            double[:, ::1] dE, Py_ssize_t row0, Py_ssize_t nsteps,
            long long gstep, long long next_rec, Py_ssize_t stride,
            double[:, ::1] out_x, double[:, ::1] out_xr, Py_ssize_t rec_i,
            double guard, double floor):
    cdef Py_ssize_t L = hist.shape[0]
    cdef Py_ssize_t n = hist.shape[1]
    cdef double *work = <double *> malloc(6 * n * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef double *b = work
    cdef double *f = work + n
    cdef double *g = work + 2 * n
    cdef double *x0 = work + 3 * n
    cdef double *xr = work + 4 * n
    cdef double *xn = work + 5 * n
    cdef double guard2 = guard * guard
    cdef Py_ssize_t step = 0, i, j
    cdef int status = C_OK
    cdef int bad
    cdef double total, favg, s2, mnoise, phi, sx, q, gi, prop, ss, v, c, lc, ssum

    with nogil:
        for step in range(nsteps):
            for i in range(n):
                x0[i] = hist[head, i]
                xr[i] = _tap(hist, head, L, kr, fr, i)

            if fam == C_REPL:
                total = scal[0]
                favg = 0.0
                s2 = 0.0
                mnoise = 0.0
                for i in range(n):
                    phi = 0.0
                    for j in range(n):
                        phi = phi + mat[i, j] * xr[j]
                    f[i] = phi
                    favg = favg + x0[i] * phi
                    sx = vec[i] * x0[i] / total
                    s2 = s2 + sx * sx
                    mnoise = mnoise + vec[i] * x0[i] * dE[row0 + step, i]
                favg = favg / total
                mnoise = mnoise / total
                for i in range(n):
                    q = vec[i] * vec[i] * (1.0 - 2.0 * x0[i] / total) + s2
                    y[i] = (y[i]
                            + (f[i] - favg - 0.5 * q) * dt
                            + vec[i] * dE[row0 + step, i]
                            - mnoise)
                    xn[i] = exp(y[i])
                ssum = 0.0
                for i in range(n):
                    ssum = ssum + xn[i]
                c = total / ssum
                lc = log(c)
                for i in range(n):
                    xn[i] = xn[i] * c
                    y[i] = y[i] + lc
            else:
                _rates(fam, scal, vec, vec2, mat, mat2, n, x0, xr, b, f, g)
                for i in range(n):
                    if kol[i]:
                        gi = g[i]
                        y[i] = (y[i]
                                + (f[i] - 0.5 * sig_diag[i] * gi * gi) * dt
                                + gi * dE[row0 + step, i])
                        xn[i] = exp(y[i])
                    else:
                        prop = (x0[i]
                                + (b[i] + x0[i] * f[i]) * dt
                                + x0[i] * g[i] * dE[row0 + step, i])
                        if prop <= 0.0:
                            status = C_BAIL
                            break
                        xn[i] = prop
                if status != C_OK:
                    break

            ss = 0.0
            bad = 0
            for i in range(n):
                v = xn[i]
                if not isfinite(v):
                    bad = 1
                    break
                ss = ss + v * v
                if kol[i] and v <= floor:
                    status = C_FLOOR
                    break
            if bad:
                status = C_NF
                break
            if status != C_OK:
                break

            head = head + 1
            if head == L:
                head = 0
            for i in range(n):
                hist[head, i] = xn[i]
            if ss > guard2:
                status = C_DIV
                step += 1
                break

            if gstep + step == next_rec:
                for i in range(n):
                    out_x[rec_i, i] = xn[i]
                    out_xr[rec_i, i] = _tap(hist, head, L, kr, fr, i)
                rec_i += 1
                next_rec += stride
        else:
            step = nsteps

    free(work)
    return status, step, head, next_rec, rec_i


def advance_coupled(int fam, double[::1] scal, double[::1] vec, double[::1] vec2,
                    double[:, ::1] mat, double[:, ::1] mat2, double[::1] sig_diag,
                    double[:, ::1] hist_a, Py_ssize_t head_a, double[::1] y_a,
                    double[:, ::1] hist_b, Py_ssize_t head_b, double[::1] y_b,
                    Py_ssize_t kr, double fr, double dt,
                    double lam, double expo,
                    double[:, ::1] dE, Py_ssize_t row0, Py_ssize_t nsteps,
                    long long gstep, long long next_rec, Py_ssize_t stride,
                    double[::1] out_z, Py_ssize_t rec_i,
                    double guard, double floor):
    cdef Py_ssize_t L = hist_a.shape[0]
    cdef Py_ssize_t n = hist_a.shape[1]
    cdef double *work = <double *> malloc(6 * n * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef double *b = work
    cdef double *f = work + n
    cdef double *g = work + 2 * n
    cdef double *x0 = work + 3 * n
    cdef double *xr = work + 4 * n
    cdef double *rate = work + 5 * n
    cdef double guard2 = guard * guard
    cdef Py_ssize_t step = 0, i
    cdef int status = C_OK
    cdef double zz, d

    with nogil:
        for step in range(nsteps):
            for i in range(n):
                rate[i] = lam * pow(1.0 + hist_a[head_a, i] + hist_b[head_b, i], expo)

            _log_step_copy(fam, scal, vec, vec2, mat, mat2, sig_diag,
                           hist_a, head_a, y_a, L, n, kr, fr, dt,
                           dE, row0 + step, x0, xr, b, f, g)
            _log_step_copy(fam, scal, vec, vec2, mat, mat2, sig_diag,
                           hist_b, head_b, y_b, L, n, kr, fr, dt,
                           dE, row0 + step, x0, xr, b, f, g)

            if lam > 0.0:
                for i in range(n):
                    y_b[i] = y_a[i] + (y_b[i] - y_a[i]) * exp(-rate[i] * dt)

            status = _commit(hist_a, head_a, y_a, L, n, guard2, floor)
            if status != C_OK:
                break
            head_a = head_a + 1
            if head_a == L:
                head_a = 0
            for i in range(n):
                hist_a[head_a, i] = exp(y_a[i])
            status = _commit(hist_b, head_b, y_b, L, n, guard2, floor)
            if status != C_OK:
                break
            head_b = head_b + 1
            if head_b == L:
                head_b = 0
            for i in range(n):
                hist_b[head_b, i] = exp(y_b[i])

            if fam == C_REPL:
                _renorm(hist_a, head_a, y_a, n, scal[0])
                _renorm(hist_b, head_b, y_b, n, scal[0])

            if gstep + step == next_rec:
                zz = 0.0
                for i in range(n):
                    d = y_a[i] - y_b[i]
                    zz = zz + d * d
                out_z[rec_i] = sqrt(zz)
                rec_i += 1
                next_rec += stride
        else:
            step = nsteps

    free(work)
    return status, step, head_a, head_b, next_rec, rec_i

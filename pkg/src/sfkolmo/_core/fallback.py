"""Pure-Python stepping core.

This is the reference implementation of the hot loops; the compiled module
``_kernels`` is a line-for-line translation. Both consume pre-generated
driver increments and perform float64 arithmetic in the same operation
order, so a run is bitwise identical under either backend.

State layout shared with the compiled core:

- ``hist``   (L, n) ring of segment samples, ``head`` the index of "now";
- ``y``      (n,) log-state of the Kolmogorov coordinates (kept exactly in
  sync with ``hist[head]``: x = exp(y));
- the -r tap is the precomputed split (kr, fr): a lag of kr grid steps plus
  a linear-interpolation fraction fr.

Status codes returned by ``advance``: 0 = finished; 1 = an affine
coordinate's Euler proposal went nonpositive (the step was NOT taken; the
caller bridges it); 2 = divergence guard tripped; 3 = non-finite state;
4 = a positive coordinate underflowed the positivity floor.
"""

from __future__ import annotations

from math import exp, isfinite, log, pow, sqrt

OK = 0
AFFINE_BAIL = 1
DIVERGED = 2
NONFINITE = 3
FLOOR_HIT = 4

FAMILY_LV = 1
FAMILY_SIR = 2
FAMILY_CHEMOSTAT = 3
FAMILY_REPLICATOR = 4


def eval_rates(fam, scal, vec, vec2, mat, mat2, x0, xr, b, f, g):
    """Fill the rate split (b, f, g) at current state x0 and delayed xr.

    ``x0``/``xr`` are sequences of length n; ``b``/``f``/``g`` are mutable
    sequences written in place.
    """
    n = len(x0)
    if fam == FAMILY_LV:
        for i in range(n):
            acc = vec[i]
            for j in range(n):
                acc = acc - mat[i, j] * x0[j]
            for j in range(n):
                acc = acc - mat2[i, j] * xr[j]
            b[i] = 0.0
            f[i] = acc
            g[i] = 1.0
    elif fam == FAMILY_SIR:
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
    elif fam == FAMILY_CHEMOSTAT:
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
    elif fam == FAMILY_REPLICATOR:
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
    else:
        raise ValueError(f"unknown kernel family {fam}")


def _tap_back(hist, head, L, kr, fr, i):
    """Delayed value of coordinate i at lag (kr + fr) grid steps."""
    a = hist[(head - kr) % L, i]
    if fr == 0.0:
        return a
    return (1.0 - fr) * a + fr * hist[(head - kr - 1) % L, i]


def advance(
    fam, scal, vec, vec2, mat, mat2, kol, sig_diag,
    hist, head, y, kr, fr, dt,
    dE, row0, nsteps, gstep,
    next_rec, stride, out_x, out_xr, rec_i,
    guard, floor,
):
    """Take up to ``nsteps`` Euler steps; see the module docstring.

    Returns (status, steps_taken, head, next_rec, rec_i). On AFFINE_BAIL the
    offending step is untaken: the caller handles step ``gstep +
    steps_taken`` itself (bridged) before calling again.
    """
    L = hist.shape[0]
    n = hist.shape[1]
    b = [0.0] * n
    f = [0.0] * n
    g = [0.0] * n
    x0 = [0.0] * n
    xr = [0.0] * n
    xn = [0.0] * n
    guard2 = guard * guard

    for step in range(nsteps):
        for i in range(n):
            x0[i] = hist[head, i]
            xr[i] = _tap_back(hist, head, L, kr, fr, i)

        if fam == FAMILY_REPLICATOR:
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
                y[i] = (
                    y[i]
                    + (f[i] - favg - 0.5 * q) * dt
                    + vec[i] * dE[row0 + step, i]
                    - mnoise
                )
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
            eval_rates(fam, scal, vec, vec2, mat, mat2, x0, xr, b, f, g)
            for i in range(n):
                if kol[i]:
                    gi = g[i]
                    y[i] = (
                        y[i]
                        + (f[i] - 0.5 * sig_diag[i] * gi * gi) * dt
                        + gi * dE[row0 + step, i]
                    )
                    xn[i] = exp(y[i])
                else:
                    prop = (
                        x0[i]
                        + (b[i] + x0[i] * f[i]) * dt
                        + x0[i] * g[i] * dE[row0 + step, i]
                    )
                    if prop <= 0.0:
                        return AFFINE_BAIL, step, head, next_rec, rec_i
                    xn[i] = prop

        ss = 0.0
        bad = False
        for i in range(n):
            v = xn[i]
            if not isfinite(v):
                bad = True
                break
            ss = ss + v * v
            if kol[i] and v <= floor:
                return FLOOR_HIT, step, head, next_rec, rec_i
        if bad:
            return NONFINITE, step, head, next_rec, rec_i

        head = (head + 1) % L
        for i in range(n):
            hist[head, i] = xn[i]
        if ss > guard2:
            return DIVERGED, step + 1, head, next_rec, rec_i

        if gstep + step == next_rec:
            for i in range(n):
                out_x[rec_i, i] = xn[i]
                out_xr[rec_i, i] = _tap_back(hist, head, L, kr, fr, i)
            rec_i += 1
            next_rec += stride

    return OK, nsteps, head, next_rec, rec_i


def advance_coupled(
    fam, scal, vec, vec2, mat, mat2, sig_diag,
    hist_a, head_a, y_a, hist_b, head_b, y_b,
    kr, fr, dt, lam, expo,
    dE, row0, nsteps, gstep,
    next_rec, stride, out_z, rec_i,
    guard, floor,
):
    """Advance two copies on the same increments with asymptotic coupling.

    Both copies take the ordinary log-space step, then copy B's log-state
    relaxes toward copy A's by the exact factor exp(-c_i dt) with
    c_i = lam (1 + x_i + x_tilde_i)^expo frozen at the step start. Only
    fully multiplicative (Kolmogorov) families run here.

    Returns (status, steps_taken, head_a, head_b, next_rec, rec_i).
    """
    L = hist_a.shape[0]
    n = hist_a.shape[1]
    b = [0.0] * n
    f = [0.0] * n
    g = [0.0] * n
    x0 = [0.0] * n
    xr = [0.0] * n
    rate = [0.0] * n
    guard2 = guard * guard

    for step in range(nsteps):
        for i in range(n):
            rate[i] = lam * pow(1.0 + hist_a[head_a, i] + hist_b[head_b, i], expo)

        for copy in range(2):
            hist = hist_a if copy == 0 else hist_b
            head = head_a if copy == 0 else head_b
            y = y_a if copy == 0 else y_b
            for i in range(n):
                x0[i] = hist[head, i]
                xr[i] = _tap_back(hist, head, L, kr, fr, i)
            if fam == FAMILY_REPLICATOR:
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
                    y[i] = (
                        y[i]
                        + (f[i] - favg - 0.5 * q) * dt
                        + vec[i] * dE[row0 + step, i]
                        - mnoise
                    )
            else:
                eval_rates(fam, scal, vec, vec2, mat, mat2, x0, xr, b, f, g)
                for i in range(n):
                    gi = g[i]
                    y[i] = (
                        y[i]
                        + (f[i] - 0.5 * sig_diag[i] * gi * gi) * dt
                        + gi * dE[row0 + step, i]
                    )

        # Relax copy B toward copy A in log space, then commit both.
        # lam == 0 skips the relaxation so the copies evolve exactly
        # independently (and bitwise identically from equal starts).
        if lam > 0.0:
            for i in range(n):
                y_b[i] = y_a[i] + (y_b[i] - y_a[i]) * exp(-rate[i] * dt)

        status = _commit_coupled(fam, scal, hist_a, head_a, y_a, L, n, guard2, floor)
        if status != OK:
            return status, step, head_a, head_b, next_rec, rec_i
        head_a = (head_a + 1) % L
        for i in range(n):
            hist_a[head_a, i] = exp(y_a[i])
        status = _commit_coupled(fam, scal, hist_b, head_b, y_b, L, n, guard2, floor)
        if status != OK:
            return status, step, head_a, head_b, next_rec, rec_i
        head_b = (head_b + 1) % L
        for i in range(n):
            hist_b[head_b, i] = exp(y_b[i])

        if fam == FAMILY_REPLICATOR:
            for hist, head, y in ((hist_a, head_a, y_a), (hist_b, head_b, y_b)):
                ssum = 0.0
                for i in range(n):
                    ssum = ssum + hist[head, i]
                c = scal[0] / ssum
                lc = log(c)
                for i in range(n):
                    hist[head, i] = hist[head, i] * c
                    y[i] = y[i] + lc

        if gstep + step == next_rec:
            zz = 0.0
            for i in range(n):
                d = y_a[i] - y_b[i]
                zz = zz + d * d
            out_z[rec_i] = sqrt(zz)
            rec_i += 1
            next_rec += stride

    return OK, nsteps, head_a, head_b, next_rec, rec_i


def _commit_coupled(fam, scal, hist, head, y, L, n, guard2, floor):
    ss = 0.0
    for i in range(n):
        v = exp(y[i])
        if not isfinite(v):
            return NONFINITE
        if v <= floor:
            return FLOOR_HIT
        ss = ss + v * v
    if ss > guard2:
        return DIVERGED
    return OK

"""Compiled kernels; mirrors carbonvol._kernels_np function-for-function.

Consumes pre-drawn variates so outputs match the numpy fallback up to
floating-point summation order.  See _kernels_np for the contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, pow, sqrt

cnp.import_array()

DEF POISSON_KMAX = 100


cdef inline long _poisson_inv_scalar(double u, double lam) noexcept nogil:
    cdef double pk, cum
    cdef long k
    if lam <= 0.0:
        return 0
    pk = exp(-lam)
    cum = pk
    k = 0
    while u > cum and k < POISSON_KMAX:
        k += 1
        pk *= lam / k
        cum += pk
    return k


def euler_intraday(double[:, ::1] z, double[::1] u_jump, double[::1] z_jump,
                   double kappa1, double omega1, double lam1, double rho1,
                   double kappa2, double omega2, double lam2, double rho2,
                   double jump_intensity, double jump_mean, double jump_std,
                   double mu0, bint use_convexity, double dt,
                   long n_days, long m, long substeps, long burn_steps,
                   double v1_init, double v2_init):
    cdef long n_steps = burn_steps + n_days * m * substeps
    if z.shape[0] != n_steps or z.shape[1] != 4:
        raise ValueError(f"z must have shape ({n_steps}, 4)")

    returns = np.zeros((n_days, m))
    iv_grid = np.zeros((n_days, m))
    true_jv = np.zeros(n_days)
    true_nj = np.zeros(n_days, dtype=np.int64)
    cdef double[:, ::1] ret = returns
    cdef double[:, ::1] iv = iv_grid
    cdef double[::1] jv = true_jv
    cdef long[::1] nj = true_nj

    cdef double v1 = v1_init
    cdef double v2 = v2_init
    cdef double q1 = sqrt(1.0 - rho1 * rho1)
    cdef double q2 = sqrt(1.0 - rho2 * rho2)
    cdef double lam_dt = jump_intensity * dt
    cdef double a, b, s1, s2, dx, js
    cdef long i, day, bar, sub, k
    cdef long idx = 0

    with nogil:
        # burn-in: advance state, discard output
        for i in range(burn_steps):
            a = v1 if v1 > 0.0 else 0.0
            b = v2 if v2 > 0.0 else 0.0
            v1 = v1 + kappa1 * (omega1 - a) * dt + lam1 * sqrt(a * dt) * z[i, 0]
            v2 = v2 + kappa2 * (omega2 - b) * dt + lam2 * sqrt(b * dt) * z[i, 2]
        idx = burn_steps
        for day in range(n_days):
            for bar in range(m):
                dx = 0.0
                for sub in range(substeps):
                    a = v1 if v1 > 0.0 else 0.0
                    b = v2 if v2 > 0.0 else 0.0
                    s1 = sqrt(a * dt)
                    s2 = sqrt(b * dt)
                    dx += s1 * (rho1 * z[idx, 0] + q1 * z[idx, 1]) \
                        + s2 * (rho2 * z[idx, 2] + q2 * z[idx, 3])
                    dx += mu0 * dt
                    if use_convexity:
                        dx -= 0.5 * (a + b) * dt
                    k = _poisson_inv_scalar(u_jump[idx], lam_dt)
                    if k > 0:
                        js = k * jump_mean + sqrt(<double> k) * jump_std * z_jump[idx]
                        dx += js
                        jv[day] += js * js
                        nj[day] += k
                    iv[day, bar] += (a + b) * dt
                    v1 = v1 + kappa1 * (omega1 - a) * dt + lam1 * s1 * z[idx, 0]
                    v2 = v2 + kappa2 * (omega2 - b) * dt + lam2 * s2 * z[idx, 2]
                    idx += 1
                ret[day, bar] = dx
    return returns, iv_grid, true_jv, true_nj


def euler_terminal(double[:, :, ::1] z, double[:, ::1] u_jump, double[:, ::1] z_jump,
                   double kappa1, double omega1, double lam1, double rho1,
                   double kappa2, double omega2, double lam2, double rho2,
                   double jump_intensity, double jump_mean, double jump_std,
                   double mu0, bint use_convexity, double dt,
                   cnp.int64_t[::1] checkpoints, double v1_init, double v2_init):
    cdef long n_paths = z.shape[0]
    cdef long n_steps = z.shape[1]
    cdef long n_checks = checkpoints.shape[0]
    out = np.empty((n_paths, n_checks))
    cdef double[:, ::1] o = out

    cdef double q1 = sqrt(1.0 - rho1 * rho1)
    cdef double q2 = sqrt(1.0 - rho2 * rho2)
    cdef double lam_dt = jump_intensity * dt
    cdef double x, v1, v2, a, b, s1, s2, dx
    cdef long p, i, k, cidx

    for p in range(n_paths):
        with nogil:
            x = 0.0
            v1 = v1_init
            v2 = v2_init
            cidx = 0
            for i in range(n_steps):
                a = v1 if v1 > 0.0 else 0.0
                b = v2 if v2 > 0.0 else 0.0
                s1 = sqrt(a * dt)
                s2 = sqrt(b * dt)
                dx = s1 * (rho1 * z[p, i, 0] + q1 * z[p, i, 1]) \
                    + s2 * (rho2 * z[p, i, 2] + q2 * z[p, i, 3])
                dx += mu0 * dt
                if use_convexity:
                    dx -= 0.5 * (a + b) * dt
                k = _poisson_inv_scalar(u_jump[p, i], lam_dt)
                if k > 0:
                    dx += k * jump_mean + sqrt(<double> k) * jump_std * z_jump[p, i]
                x += dx
                v1 = v1 + kappa1 * (omega1 - a) * dt + lam1 * s1 * z[p, i, 0]
                v2 = v2 + kappa2 * (omega2 - b) * dt + lam2 * s2 * z[p, i, 2]
                while cidx < n_checks and checkpoints[cidx] == i + 1:
                    o[p, cidx] = x
                    cidx += 1
            if cidx != n_checks:
                with gil:
                    raise ValueError("checkpoints must be sorted, unique, and <= n_steps")
    return out


def local_variance_day(double[::1] r, double[::1] weights,
                       double c_tau_sq, long n_passes,
                       double trim_correction, double min_var):
    cdef long n = r.shape[0]
    cdef long wlen = weights.shape[0]
    cdef long half = wlen // 2
    out = np.empty(n)
    prev = np.empty(n)
    incl = np.ones(n)
    r2 = np.empty(n)
    cdef double[::1] v = out
    cdef double[::1] vp = prev
    cdef double[::1] inc = incl
    cdef double[::1] rr = r2
    cdef long j, i, lo, hi, it
    cdef double num, den, w

    with nogil:
        for j in range(n):
            rr[j] = r[j] * r[j]
        # pass 0: untrimmed
        for j in range(n):
            num = 0.0
            den = 0.0
            lo = j - half if j - half > 0 else 0
            hi = j + half + 1 if j + half + 1 < n else n
            for i in range(lo, hi):
                w = weights[i - j + half]
                num += w * rr[i]
                den += w
            if den > 0.0:
                v[j] = num / den
            else:
                v[j] = min_var
            if v[j] < min_var:
                v[j] = min_var
        for it in range(n_passes):
            for j in range(n):
                vp[j] = v[j]
                inc[j] = 1.0 if rr[j] <= c_tau_sq * v[j] else 0.0
            for j in range(n):
                num = 0.0
                den = 0.0
                lo = j - half if j - half > 0 else 0
                hi = j + half + 1 if j + half + 1 < n else n
                for i in range(lo, hi):
                    w = weights[i - j + half] * inc[i]
                    num += w * rr[i]
                    den += w
                if den > 0.0:
                    v[j] = num / den / trim_correction
                else:
                    v[j] = vp[j]
                if v[j] < min_var:
                    v[j] = min_var
    return out


def tmpv_day(double[::1] r, double[::1] thresholds, gammas, z_consts,
             double prefactor, double mu_norm, bint corrected):
    cdef long n = r.shape[0]
    cdef long mm = len(gammas)
    if n < mm:
        raise ValueError(f"grid of length {n} shorter than {mm} exponents")
    cdef double g0 = gammas[0]
    cdef double g1 = gammas[1] if mm > 1 else 0.0
    cdef double g2 = gammas[2] if mm > 2 else 0.0
    cdef double zc0 = z_consts[0]
    cdef double zc1 = z_consts[1] if mm > 1 else 0.0
    cdef double zc2 = z_consts[2] if mm > 2 else 0.0
    if mm > 3:
        raise ValueError("at most three exponents supported")
    cdef double total = 0.0
    cdef double prod, term
    cdef long j, k
    cdef double g, zc
    cdef double[3] gs
    cdef double[3] zs
    gs[0] = g0; gs[1] = g1; gs[2] = g2
    zs[0] = zc0; zs[1] = zc1; zs[2] = zc2

    with nogil:
        for j in range(mm - 1, n):
            prod = 1.0
            for k in range(mm):
                g = gs[k]
                zc = zs[k]
                if r[j - k] * r[j - k] <= thresholds[j - k]:
                    term = pow(fabs(r[j - k]), g)
                else:
                    term = zc * pow(thresholds[j - k], 0.5 * g) if corrected else 0.0
                prod *= term
                if prod == 0.0:
                    break
            total += prod
    return prefactor * mu_norm * total

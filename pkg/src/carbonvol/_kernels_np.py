"""Pure-numpy implementations of the hot kernels.

This module is the fallback backend and the reference implementation the
compiled extension must agree with (see tests/test_backend_parity.py).
Every function here consumes pre-drawn random variates, so results are
identical across backends up to floating-point summation order.

Kernel contracts
----------------
``euler_intraday``   one replica of the two-factor SV-with-jumps model on an
                     intraday grid; full-truncation Euler (variance floored
                     at zero inside drift and diffusion).
``euler_terminal``   many paths, log-price recorded at checkpoint steps;
                     used by the Monte Carlo pricing oracle.
``local_variance_day``  iterated kernel smoother of squared returns with
                     jump trimming between passes.
``tmpv_day``         (corrected) threshold multipower variation sum.

Randomness layout per replica/path, in draw order from one Generator:
``z`` iid N(0,1) of shape (n_steps, 4), ``u_jump`` uniforms (n_steps,),
``z_jump`` iid N(0,1) (n_steps,).  Column mapping for ``z``:
0 -> variance-1 shock, 1 -> price shock orthogonal to factor 1,
2 -> variance-2 shock, 3 -> price shock orthogonal to factor 2.
"""

import math

import numpy as np

_POISSON_KMAX = 100


def _poisson_inv(u, lam):
    """Poisson counts from uniforms by cdf inversion (vectorized).

    Monotone in ``u`` for fixed ``lam``, which keeps common random numbers
    meaningful when the intensity changes between evaluations.
    """
    u = np.asarray(u)
    if lam <= 0.0:
        return np.zeros(u.shape, dtype=np.int64)
    k = np.zeros(u.shape, dtype=np.int64)
    pk = math.exp(-lam)
    cum = np.full(u.shape, pk)
    pending = u > cum
    j = 0
    while pending.any() and j < _POISSON_KMAX:
        j += 1
        pk *= lam / j
        cum = cum + pk
        newly_done = pending & (u <= cum)
        k[pending] = j
        pending = pending & ~newly_done
    return k


def euler_intraday(z, u_jump, z_jump,
                   kappa1, omega1, lam1, rho1,
                   kappa2, omega2, lam2, rho2,
                   jump_intensity, jump_mean, jump_std,
                   mu0, use_convexity, dt,
                   n_days, m, substeps, burn_steps,
                   v1_init, v2_init):
    """Simulate one replica; return per-interval log-returns plus oracles.

    Returns
    -------
    returns : (n_days, m) per-interval log-returns
    iv_grid : (n_days, m) integrated variance driving each interval's diffusion
    true_jv : (n_days,) sum of squared jump sizes added to the log-price
    true_nj : (n_days,) int64, Poisson jump counts
    """
    n_steps = burn_steps + n_days * m * substeps
    if z.shape != (n_steps, 4):
        raise ValueError(f"z must have shape ({n_steps}, 4), got {z.shape}")

    # variance recursions are inherently sequential; run them as scalar loops
    v1p = np.empty(n_steps)
    v2p = np.empty(n_steps)
    sq_dt = math.sqrt(dt)
    v1 = v1_init
    v2 = v2_init
    z0 = z[:, 0]
    z2 = z[:, 2]
    for i in range(n_steps):
        a = v1 if v1 > 0.0 else 0.0
        b = v2 if v2 > 0.0 else 0.0
        v1p[i] = a
        v2p[i] = b
        v1 = v1 + kappa1 * (omega1 - a) * dt + lam1 * math.sqrt(a * dt) * z0[i]
        v2 = v2 + kappa2 * (omega2 - b) * dt + lam2 * math.sqrt(b * dt) * z2[i]

    q1 = math.sqrt(1.0 - rho1 * rho1)
    q2 = math.sqrt(1.0 - rho2 * rho2)
    s1 = np.sqrt(v1p * dt)
    s2 = np.sqrt(v2p * dt)
    dx = s1 * (rho1 * z[:, 0] + q1 * z[:, 1]) + s2 * (rho2 * z[:, 2] + q2 * z[:, 3])
    dx += mu0 * dt
    if use_convexity:
        dx -= 0.5 * (v1p + v2p) * dt

    counts = _poisson_inv(u_jump, jump_intensity * dt)
    jumps = np.zeros(n_steps)
    hit = counts > 0
    if hit.any():
        kk = counts[hit].astype(float)
        # simultaneous same-substep jumps merge into one compound draw
        jumps[hit] = kk * jump_mean + np.sqrt(kk) * jump_std * z_jump[hit]
    dx += jumps

    sl = slice(burn_steps, n_steps)
    shape = (n_days, m, substeps)
    returns = dx[sl].reshape(shape).sum(axis=2)
    iv_grid = ((v1p[sl] + v2p[sl]) * dt).reshape(shape).sum(axis=2)
    true_jv = (jumps[sl] ** 2).reshape(shape).sum(axis=2).sum(axis=1)
    true_nj = counts[sl].reshape(shape).sum(axis=2).sum(axis=1)
    return returns, iv_grid, true_jv, true_nj


def euler_terminal(z, u_jump, z_jump,
                   kappa1, omega1, lam1, rho1,
                   kappa2, omega2, lam2, rho2,
                   jump_intensity, jump_mean, jump_std,
                   mu0, use_convexity, dt,
                   checkpoints, v1_init, v2_init):
    """Simulate many paths; record cumulative log-return at checkpoint steps.

    ``z`` has shape (n_paths, n_steps, 4); ``checkpoints`` holds 1-based step
    indices (state recorded after that many steps).  Returns (n_paths, n_checks).
    """
    n_paths, n_steps, _ = z.shape
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    out = np.empty((n_paths, checkpoints.size))
    q1 = math.sqrt(1.0 - rho1 * rho1)
    q2 = math.sqrt(1.0 - rho2 * rho2)
    sq = math.sqrt(dt)

    x = np.zeros(n_paths)
    v1 = np.full(n_paths, v1_init)
    v2 = np.full(n_paths, v2_init)
    lam_dt = jump_intensity * dt
    cidx = 0
    for i in range(n_steps):
        a = np.maximum(v1, 0.0)
        b = np.maximum(v2, 0.0)
        s1 = np.sqrt(a * dt)
        s2 = np.sqrt(b * dt)
        dx = s1 * (rho1 * z[:, i, 0] + q1 * z[:, i, 1]) \
            + s2 * (rho2 * z[:, i, 2] + q2 * z[:, i, 3])
        dx += mu0 * dt
        if use_convexity:
            dx -= 0.5 * (a + b) * dt
        counts = _poisson_inv(u_jump[:, i], lam_dt)
        hit = counts > 0
        if hit.any():
            kk = counts[hit].astype(float)
            dx[hit] += kk * jump_mean + np.sqrt(kk) * jump_std * z_jump[hit, i]
        x += dx
        v1 = v1 + kappa1 * (omega1 - a) * dt + lam1 * s1 * z[:, i, 0]
        v2 = v2 + kappa2 * (omega2 - b) * dt + lam2 * s2 * z[:, i, 2]
        while cidx < checkpoints.size and checkpoints[cidx] == i + 1:
            out[:, cidx] = x
            cidx += 1
    if cidx != checkpoints.size:
        raise ValueError("checkpoints must be sorted, unique, and <= n_steps")
    return out


def local_variance_day(r, weights, c_tau_sq, n_passes, trim_correction, min_var):
    """Per-interval local variance by an iterated, jump-trimmed smoother.

    ``weights`` is the full centered kernel (odd length) with the exclusion
    zone already zeroed.  Pass 0 smooths raw squared returns; each further
    pass drops returns exceeding ``c_tau_sq`` times the previous estimate and
    divides by ``trim_correction`` to undo the truncation bias.
    """
    r = np.asarray(r, dtype=float)
    r2 = r * r
    w = np.asarray(weights, dtype=float)
    ones = np.ones_like(r2)

    num = np.convolve(r2, w, mode="same")
    den = np.convolve(ones, w, mode="same")
    v = np.where(den > 0.0, num / np.maximum(den, 1e-300), min_var)
    v = np.maximum(v, min_var)

    for _ in range(n_passes):
        incl = (r2 <= c_tau_sq * v).astype(float)
        num = np.convolve(r2 * incl, w, mode="same")
        den = np.convolve(incl, w, mode="same")
        v_new = np.where(den > 0.0, num / np.maximum(den, 1e-300) / trim_correction, v)
        v = np.maximum(v_new, min_var)
    return v


def tmpv_day(r, thresholds, gammas, z_consts, prefactor, mu_norm, corrected):
    """(Corrected) threshold multipower variation of one day's return grid.

    Terms with squared return above the threshold are replaced by
    ``z_consts[k] * threshold**(gamma_k / 2)`` when ``corrected`` and by zero
    otherwise.  ``prefactor`` carries the grid-size power, ``mu_norm`` the
    absolute-moment normalization.
    """
    r = np.asarray(r, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    a = np.abs(r)
    n = r.size
    mm = len(gammas)
    if n < mm:
        raise ValueError(f"grid of length {n} shorter than {mm} exponents")
    terms = []
    for g, zc in zip(gammas, z_consts):
        ok = r * r <= thr
        rep = zc * thr ** (g * 0.5) if corrected else 0.0
        terms.append(np.where(ok, a ** g, rep))
    # product over k of term_k[j - k], summed over j = mm-1 .. n-1
    prod = terms[0][mm - 1:]
    for k in range(1, mm):
        prod = prod * terms[k][mm - 1 - k: n - k]
    return prefactor * mu_norm * float(np.sum(prod))

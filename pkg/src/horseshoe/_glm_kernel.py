"""Compiled log posterior and gradient for shrinkage-prior GLMs.

The unconstrained vector is laid out by ``offsets`` (``-1`` marks an absent
block): z, local scale (1 or 2 blocks), global scale (1 or 2 entries),
log c^2, intercept, log sigma.
"""

import math

import numba
import numpy as np

GAUSSIAN = 0
BERNOULLI = 1

TAU_FIXED = 0
TAU_HALF_T = 1  # half-normal is dof = inf, half-Cauchy dof = 1

SLAB_INFINITE = 0
SLAB_FIXED = 1
SLAB_INV_GAMMA = 2

LOG_2PI = math.log(2.0 * math.pi)


@numba.njit(nogil=True, cache=True)
def _half_t_terms(x, dof):
    """Log density (up to const) of a half-t(dof) at ratio x, and d/dlog x."""
    x2 = x * x
    if math.isinf(dof):
        return -0.5 * x2, -x2
    return -0.5 * (dof + 1.0) * math.log1p(x2 / dof), -(dof + 1.0) * x2 / (dof + x2)


@numba.njit(nogil=True, cache=True)
def glm_logp_grad(theta, args):
    (X, y, identity, family, D, local_dof, lam_fixed,
     tau_kind, tau_scale, tau_dof, tau_rel,
     slab_kind, c_fixed, slab_alpha, slab_beta,
     intercept_sd, sigma_fixed, decomposed, offsets) = args
    iz, il1, il2, it1, it2, ic, ib, isg = (offsets[0], offsets[1], offsets[2], offsets[3],
                                           offsets[4], offsets[5], offsets[6], offsets[7])
    grad = np.zeros(theta.size)
    lp = 0.0
    dlog_sigma = 0.0

    if isg >= 0:
        sigma = math.exp(theta[isg])
    else:
        sigma = sigma_fixed

    # local scales
    lam = np.empty(D)
    if il1 < 0:
        for j in range(D):
            lam[j] = lam_fixed[j]
    elif not decomposed:
        cauchy = local_dof == 1.0
        for j in range(D):
            u = theta[il1 + j]
            lj = math.exp(u)
            lam[j] = lj
            x2 = lj * lj
            if cauchy:
                lp += u - math.log1p(x2)
                grad[il1 + j] = 1.0 - 2.0 * x2 / (1.0 + x2)
            else:
                t, d = _half_t_terms(lj, local_dof)
                lp += t + u
                grad[il1 + j] = d + 1.0
    else:
        half = 0.5 * local_dof
        for j in range(D):
            w1 = theta[il1 + j]
            w2 = theta[il2 + j]
            r1 = math.exp(w1)
            e = math.exp(-w2)
            lp += -0.5 * r1 * r1 + w1 - half * w2 - half * e
            grad[il1 + j] = -r1 * r1 + 1.0
            grad[il2 + j] = -half + half * e
            lam[j] = r1 / math.sqrt(e)

    # global scale
    scale = tau_scale * sigma if tau_rel else tau_scale
    if tau_kind == TAU_FIXED:
        tau = scale
    elif not decomposed or math.isinf(tau_dof):
        t0 = theta[it1]
        tau = math.exp(t0)
        t, d = _half_t_terms(tau / scale, tau_dof)
        lp += t - math.log(scale) + t0
        grad[it1] += d + 1.0
        if tau_rel:
            dlog_sigma += -d - 1.0
    else:
        w1g = theta[it1]
        w2g = theta[it2]
        r1g = math.exp(w1g)
        x = r1g / scale
        lp += -0.5 * x * x - math.log(scale) + w1g
        grad[it1] += -x * x + 1.0
        if tau_rel:
            dlog_sigma += x * x - 1.0
        half = 0.5 * tau_dof
        e = math.exp(-w2g)
        lp += -half * w2g - half * e
        grad[it2] += -half + half * e
        tau = r1g * math.exp(0.5 * w2g)

    # slab
    if slab_kind == SLAB_INV_GAMMA:
        wc = theta[ic]
        c2 = math.exp(wc)
        e = math.exp(-wc)
        lp += -slab_alpha * wc - slab_beta * e
        grad[ic] += -slab_alpha + slab_beta * e
    elif slab_kind == SLAB_FIXED:
        c2 = c_fixed * c_fixed
    else:
        c2 = np.inf
    finite_slab = slab_kind != SLAB_INFINITE

    # effective scales s_j = tau * lambda_tilde_j and coefficients
    s = np.empty(D)
    weight = np.empty(D)
    beta = np.empty(D)
    for j in range(D):
        zj = theta[iz + j]
        lp -= 0.5 * zj * zj
        sj = tau * lam[j]
        if finite_slab:
            q = sj * sj
            w = c2 / (c2 + q)
            sj = sj * math.sqrt(w)
        else:
            w = 1.0
        s[j] = sj
        weight[j] = w
        beta[j] = zj * sj

    b0 = theta[ib] if ib >= 0 else 0.0
    if ib >= 0 and not math.isinf(intercept_sd):
        lp -= 0.5 * b0 * b0 / (intercept_sd * intercept_sd)
        grad[ib] -= b0 / (intercept_sd * intercept_sd)

    if identity:
        f = beta
    else:
        f = X @ beta
    n = y.size
    gf = np.empty(n)
    if family == GAUSSIAN:
        inv_s2 = 1.0 / (sigma * sigma)
        ssr = 0.0
        for i in range(n):
            r = y[i] - f[i] - b0
            ssr += r * r
            gf[i] = r * inv_s2
        lp += -n * math.log(sigma) - 0.5 * ssr * inv_s2 - 0.5 * n * LOG_2PI
        dlog_sigma += -n + ssr * inv_s2
    else:
        for i in range(n):
            fi = f[i] + b0
            if fi > 0:
                ef = math.exp(-fi)
                lp += y[i] * fi - fi - math.log1p(ef)
                gf[i] = y[i] - 1.0 / (1.0 + ef)
            else:
                ef = math.exp(fi)
                lp += y[i] * fi - math.log1p(ef)
                gf[i] = y[i] - ef / (1.0 + ef)

    if identity:
        g_beta = gf
    else:
        g_beta = X.T @ gf
    if ib >= 0:
        grad[ib] += np.sum(gf)

    dlog_tau = 0.0
    dlog_c2 = 0.0
    for j in range(D):
        gb = g_beta[j]
        h = gb * beta[j]
        grad[iz + j] += gb * s[j] - theta[iz + j]
        hw = h * weight[j]
        if il1 >= 0:
            grad[il1 + j] += hw
            if decomposed:
                grad[il2 + j] += 0.5 * hw
        dlog_tau += hw
        dlog_c2 += h - hw
    if tau_kind == TAU_FIXED:
        if tau_rel:
            dlog_sigma += dlog_tau
    else:
        grad[it1] += dlog_tau
        if it2 >= 0:
            grad[it2] += 0.5 * dlog_tau
    if slab_kind == SLAB_INV_GAMMA:
        grad[ic] += 0.5 * dlog_c2
    if isg >= 0:
        grad[isg] += dlog_sigma

    if not math.isfinite(lp):
        return -np.inf, np.zeros(theta.size)
    for k in range(theta.size):
        if not math.isfinite(grad[k]):
            return -np.inf, np.zeros(theta.size)
    return lp, grad

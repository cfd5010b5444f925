"""Compiled multinomial NUTS transition and warmup loop.

The kernels are built twice from the same source: once under ``numba.njit``
for compiled targets and once as plain Python for arbitrary callables.
Targets have the signature ``target(theta, args) -> (log_density, gradient)``.
"""

import math

import numba
import numpy as np

# dual averaging constants (Hoffman & Gelman 2014)
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75


def _identity(fn):
    return fn


def make_kernels(jit):
    deco = numba.njit(nogil=True) if jit else _identity

    @deco
    def logaddexp(a, b):
        if a == -np.inf:
            return b
        if b == -np.inf:
            return a
        if a > b:
            return a + math.log1p(math.exp(b - a))
        return b + math.log1p(math.exp(a - b))

    @deco
    def kinetic(p, inv_mass):
        return 0.5 * np.sum(p * p * inv_mass)

    @deco
    def draw_momentum(inv_mass):
        return np.random.normal(0.0, 1.0, inv_mass.size) / np.sqrt(inv_mass)

    @deco
    def leapfrog(target, args, q, p, g, eps, inv_mass):
        p_half = p + 0.5 * eps * g
        q_new = q + eps * inv_mass * p_half
        lp_new, g_new = target(q_new, args)
        p_new = p_half + 0.5 * eps * g_new
        return q_new, p_new, lp_new, g_new

    @deco
    def hamiltonian(lp, p, inv_mass):
        h = -lp + kinetic(p, inv_mass)
        if not np.isfinite(h):
            return np.inf
        return h

    @deco
    def init_step_size(target, args, q, lp, g, inv_mass, eps):
        """Double or halve ``eps`` until one-step acceptance crosses 0.8."""
        log_target = math.log(0.8)
        p = draw_momentum(inv_mass)
        h0 = hamiltonian(lp, p, inv_mass)
        _, p1, lp1, _ = leapfrog(target, args, q, p, g, eps, inv_mass)
        delta = h0 - hamiltonian(lp1, p1, inv_mass)
        direction = 1 if delta > log_target else -1
        for _ in range(100):
            p = draw_momentum(inv_mass)
            h0 = hamiltonian(lp, p, inv_mass)
            _, p1, lp1, _ = leapfrog(target, args, q, p, g, eps, inv_mass)
            delta = h0 - hamiltonian(lp1, p1, inv_mass)
            if direction == 1 and not delta > log_target:
                break
            if direction == -1 and not delta < log_target:
                break
            eps = eps * 2.0 if direction == 1 else eps * 0.5
            if eps > 1e7 or eps < 1e-12:
                break
        return eps

    @deco
    def transition(target, args, q, lp, g, eps, inv_mass, max_depth, max_dh,
                   ps_start, rho_start, buf):
        """One NUTS iteration from ``(q, lp, g)``.

        ``buf`` is a (13, dim) workspace. Returns the selected state and
        (depth, n_leapfrog, accept_stat, divergent).
        """
        dim = q.size
        q_minus = buf[0]
        p_minus = buf[1]
        q_plus = buf[2]
        p_plus = buf[3]
        qc = buf[4]
        pc = buf[5]
        q_sub = buf[6]
        q_sel = buf[7]
        rho = buf[8]
        rho_sub = buf[9]
        ps_minus = buf[10]
        ps_plus = buf[11]
        ps = buf[12]

        kin = 0.0
        for j in range(dim):
            pj = np.random.standard_normal() / math.sqrt(inv_mass[j])
            p_minus[j] = pj
            p_plus[j] = pj
            rho[j] = pj
            q_minus[j] = q[j]
            q_plus[j] = q[j]
            q_sel[j] = q[j]
            ps_minus[j] = inv_mass[j] * pj
            ps_plus[j] = ps_minus[j]
            kin += pj * ps_minus[j]
        h0 = -lp + 0.5 * kin
        if not np.isfinite(h0):
            h0 = np.inf

        g_minus = g
        g_plus = g
        g_sel = g
        lp_sel = lp
        log_w = 0.0

        depth = 0
        n_leap = 0
        sum_acc = 0.0
        divergent = False

        while depth < max_depth:
            direction = 1.0 if np.random.random() < 0.5 else -1.0
            if direction > 0:
                qc[:] = q_plus
                pc[:] = p_plus
                gc = g_plus
            else:
                qc[:] = q_minus
                pc[:] = p_minus
                gc = g_minus
            step = direction * eps
            half = 0.5 * step

            n_leaves = 1 << depth
            log_w_sub = -np.inf
            rho_sub[:] = 0.0
            lp_sub = 0.0
            g_sub = gc
            valid = True
            for k in range(n_leaves):
                for j in range(dim):
                    pc[j] += half * gc[j]
                    qc[j] += step * inv_mass[j] * pc[j]
                lpc, gc = target(qc, args)
                n_leap += 1
                kin = 0.0
                for j in range(dim):
                    pc[j] += half * gc[j]
                    ps[j] = inv_mass[j] * pc[j]
                    kin += pc[j] * ps[j]
                h = -lpc + 0.5 * kin
                if not np.isfinite(h):
                    h = np.inf
                dh = h - h0
                if dh <= 0.0:
                    sum_acc += 1.0
                else:
                    sum_acc += math.exp(-dh)
                if dh > max_dh:
                    divergent = True
                    valid = False
                    break
                new_log_w = logaddexp(log_w_sub, -dh)
                if math.log(np.random.random()) < -dh - new_log_w:
                    q_sub[:] = qc
                    lp_sub = lpc
                    g_sub = gc
                log_w_sub = new_log_w

                # open checkpoints for aligned blocks starting at this leaf
                level = 1
                while level <= depth and k % (1 << level) == 0:
                    ps_start[level] = ps
                    rho_start[level] = rho_sub
                    level += 1
                for j in range(dim):
                    rho_sub[j] += pc[j]
                # close aligned blocks ending at this leaf
                level = 1
                while level <= depth and (k + 1) % (1 << level) == 0:
                    d_start = 0.0
                    d_end = 0.0
                    for j in range(dim):
                        r = rho_sub[j] - rho_start[level, j]
                        d_start += ps_start[level, j] * r
                        d_end += ps[j] * r
                    if not (d_start > 0.0 and d_end > 0.0):
                        valid = False
                        break
                    level += 1
                if not valid:
                    break

            if not valid:
                break
            depth += 1

            if direction > 0:
                q_plus[:] = qc
                p_plus[:] = pc
                ps_plus[:] = ps
                g_plus = gc
            else:
                q_minus[:] = qc
                p_minus[:] = pc
                ps_minus[:] = ps
                g_minus = gc

            if math.log(np.random.random()) < log_w_sub - log_w:
                q_sel[:] = q_sub
                lp_sel = lp_sub
                g_sel = g_sub
            log_w = logaddexp(log_w, log_w_sub)
            d_minus = 0.0
            d_plus = 0.0
            for j in range(dim):
                rho[j] += rho_sub[j]
                d_minus += ps_minus[j] * rho[j]
                d_plus += ps_plus[j] * rho[j]
            if not (d_minus > 0.0 and d_plus > 0.0):
                break

        accept = sum_acc / n_leap if n_leap > 0 else 0.0
        return q_sel.copy(), lp_sel, g_sel, depth, n_leap, accept, divergent

    @deco
    def run_chain(target, args, q0, seed, n_warmup, n_samples, target_accept,
                  max_depth, max_dh, init_buffer, term_buffer, base_window,
                  adapt_metric, inv_mass0, step_size0):
        np.random.seed(seed)
        dim = q0.size
        q = q0.copy()
        lp, g = target(q, args)
        inv_mass = inv_mass0.copy()

        draws = np.empty((n_samples, dim))
        lps = np.empty(n_samples)
        depths = np.empty(n_samples, dtype=np.int64)
        n_leaps = np.empty(n_samples, dtype=np.int64)
        accepts = np.empty(n_samples)
        divergents = np.zeros(n_samples, dtype=np.bool_)
        warmup_divergent = 0

        ps_start = np.zeros((max_depth + 1, dim))
        rho_start = np.zeros((max_depth + 1, dim))
        buf = np.zeros((13, dim))

        eps = step_size0
        if n_warmup > 0:
            eps = init_step_size(target, args, q, lp, g, inv_mass, eps)
        mu = math.log(10.0 * eps)
        da_count = 0
        s_bar = 0.0
        x_bar = 0.0

        # windowed metric adaptation state
        win_counter = 0
        win_size = base_window
        win_next = init_buffer + base_window - 1
        w_n = 0
        w_mean = np.zeros(dim)
        w_m2 = np.zeros(dim)

        for it in range(n_warmup + n_samples):
            warm = it < n_warmup
            q, lp, g, depth, n_leap, accept, div = transition(
                target, args, q, lp, g, eps, inv_mass, max_depth, max_dh,
                ps_start, rho_start, buf)
            if warm:
                if div:
                    warmup_divergent += 1
                da_count += 1
                stat = min(1.0, accept)
                eta = 1.0 / (da_count + DA_T0)
                s_bar = (1.0 - eta) * s_bar + eta * (target_accept - stat)
                x = mu - s_bar * math.sqrt(da_count) / DA_GAMMA
                x_eta = da_count ** (-DA_KAPPA)
                x_bar = (1.0 - x_eta) * x_bar + x_eta * x
                eps = math.exp(x)

                if adapt_metric:
                    in_window = (win_counter >= init_buffer
                                 and win_counter < n_warmup - term_buffer
                                 and win_counter != n_warmup)
                    if in_window:
                        w_n += 1
                        delta = q - w_mean
                        w_mean = w_mean + delta / w_n
                        w_m2 = w_m2 + delta * (q - w_mean)
                    end_window = (win_counter == win_next
                                  and win_counter != n_warmup)
                    if end_window:
                        # grow the next window, absorbing a short remainder
                        last = n_warmup - term_buffer - 1
                        if win_next != last:
                            win_size *= 2
                            win_next = win_counter + win_size
                            if win_next != last:
                                if win_next + 2 * win_size >= n_warmup - term_buffer:
                                    win_next = last
                        if w_n > 1:
                            var = w_m2 / (w_n - 1)
                            var = (w_n / (w_n + 5.0)) * var + 1e-3 * (5.0 / (w_n + 5.0))
                            inv_mass = var
                        w_n = 0
                        w_mean = np.zeros(dim)
                        w_m2 = np.zeros(dim)
                        eps = init_step_size(target, args, q, lp, g, inv_mass, eps)
                        mu = math.log(10.0 * eps)
                        da_count = 0
                        s_bar = 0.0
                        x_bar = 0.0
                    win_counter += 1

                if it == n_warmup - 1:
                    eps = math.exp(x_bar)
            else:
                j = it - n_warmup
                draws[j] = q
                lps[j] = lp
                depths[j] = depth
                n_leaps[j] = n_leap
                accepts[j] = accept
                divergents[j] = div

        return (draws, lps, depths, n_leaps, accepts, divergents, eps,
                inv_mass, warmup_divergent)

    return run_chain, transition, leapfrog


JIT_RUN_CHAIN, JIT_TRANSITION, JIT_LEAPFROG = make_kernels(True)
PY_RUN_CHAIN, PY_TRANSITION, PY_LEAPFROG = make_kernels(False)

"""Compiled Dormand-Prince 8(5,3) stepper with dense output and linear-section
events.  Tableau coefficients come from scipy; the step loop, step-size
control and event refinement run in numba.
"""
import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _coef

from .dynamics import rhs

N_STAGES = _coef.N_STAGES
N_EXT = _coef.N_STAGES_EXTENDED
C = np.ascontiguousarray(_coef.C, dtype=np.float64)
A = np.ascontiguousarray(_coef.A, dtype=np.float64)
B = np.ascontiguousarray(_coef.B, dtype=np.float64)
E3 = np.ascontiguousarray(_coef.E3, dtype=np.float64)
E5 = np.ascontiguousarray(_coef.E5, dtype=np.float64)
D = np.ascontiguousarray(_coef.D, dtype=np.float64)
N_DENSE = 7  # dense-output polynomial terms per step

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERROR_EXPONENT = -1.0 / 8.0

STATUS_DONE = 0
STATUS_EVENT = 1
STATUS_COLLISION = 2
STATUS_STEP_UNDERFLOW = 3
STATUS_MAX_STEPS = 4
STATUS_TANGENCY = 5


@njit(cache=True)
def _stages(kind, t, y, h, p, K, y_new):
    """Fill K[1:12] and y_new for one step; K[0] must hold f(t, y)."""
    n = y.shape[0]
    tmp = np.empty(n)
    for s in range(1, N_STAGES):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            tmp[i] = y[i] + h * acc
        rhs(kind, t + C[s] * h, tmp, p, K[s])
    for i in range(n):
        acc = 0.0
        for j in range(N_STAGES):
            acc += B[j] * K[j, i]
        y_new[i] = y[i] + h * acc
    rhs(kind, t + h, y_new, p, K[N_STAGES])


@njit(cache=True)
def _error_norm(K, h, y, y_new, rtol, atol):
    n = y.shape[0]
    e5 = 0.0
    e3 = 0.0
    for i in range(n):
        sc = atol + max(abs(y[i]), abs(y_new[i])) * rtol
        a5 = 0.0
        a3 = 0.0
        for j in range(N_STAGES + 1):
            a5 += K[j, i] * E5[j]
            a3 += K[j, i] * E3[j]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    denom = e5 + 0.01 * e3
    return abs(h) * e5 / np.sqrt(denom * n)


@njit(cache=True)
def _dense(kind, t, y, y_new, h, p, K, out):
    """Dense-output coefficients of a completed step into out[1:8]; out[0] = y."""
    n = y.shape[0]
    tmp = np.empty(n)
    for s in range(N_STAGES + 1, N_EXT):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            tmp[i] = y[i] + h * acc
        rhs(kind, t + C[s] * h, tmp, p, K[s])
    for i in range(n):
        dy = y_new[i] - y[i]
        out[0, i] = y[i]
        out[1, i] = dy
        out[2, i] = h * K[0, i] - dy
        out[3, i] = 2.0 * dy - h * (K[N_STAGES, i] + K[0, i])
        for r in range(4):
            acc = 0.0
            for j in range(N_EXT):
                acc += D[r, j] * K[j, i]
            out[4 + r, i] = h * acc


@njit(cache=True)
def _dense_component(coeffs, x, comp):
    y = 0.0
    for k in range(N_DENSE):
        y += coeffs[N_DENSE - k, comp]
        if k % 2 == 0:
            y *= x
        else:
            y *= 1.0 - x
    return y + coeffs[0, comp]


@njit(cache=True)
def _dense_linear(coeffs, x, normal):
    g = 0.0
    for c in range(normal.shape[0]):
        if normal[c] != 0.0:
            g += normal[c] * _dense_component(coeffs, x, c)
    return g


@njit(cache=True)
def dense_eval(t_nodes, coeffs, tq):
    """Evaluate a stored dense trajectory at arbitrary times tq."""
    m = coeffs.shape[0]
    n = coeffs.shape[2]
    out = np.empty((tq.shape[0], n))
    forward = t_nodes[-1] >= t_nodes[0]
    for q in range(tq.shape[0]):
        t = tq[q]
        if forward:
            k = np.searchsorted(t_nodes, t, side="right") - 1
        else:
            k = np.searchsorted(-t_nodes, -t, side="right") - 1
        if k < 0:
            k = 0
        if k > m - 1:
            k = m - 1
        h = t_nodes[k + 1] - t_nodes[k]
        x = (t - t_nodes[k]) / h if h != 0.0 else 0.0
        for c in range(n):
            out[q, c] = _dense_component(coeffs[k], x, c)
    return out


@njit(cache=True)
def _select_initial_step(kind, t0, y0, f0, direction, rtol, atol, p):
    n = y0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + abs(y0[i]) * rtol
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = np.sqrt(d0 / n)
    d1 = np.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = np.empty(n)
    rhs(kind, t0 + h0 * direction, y1, p, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + abs(y0[i]) * rtol
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = np.sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1)


@njit(cache=True)
def _linear(normal, y):
    g = 0.0
    for c in range(normal.shape[0]):
        g += normal[c] * y[c]
    return g


@njit(cache=True)
def integrate(
    kind,
    p,
    t0,
    y0,
    t1,
    rtol,
    atol,
    max_step,
    r_min,
    record,
    normal,
    offset,
    ev_dir,
    guard_normal,
    guard_sign,
    n_cross,
    max_steps,
    tangency_tol,
):
    """Adaptive DOP853 integration from t0 towards t1.

    When ``n_cross > 0`` the run stops at the n-th crossing of the section
    normal . z = offset (restricted to ``ev_dir`` and to guard_sign *
    guard_normal . z > 0 when guard_sign != 0).

    Returns (status, t_end, y_end, t_nodes, coeffs, n_steps, n_rejected).
    ``t_nodes``/``coeffs`` are empty unless ``record``.
    """
    n = y0.shape[0]
    direction = 1.0 if t1 >= t0 else -1.0
    y = y0.copy()
    t = t0
    cap = 256 if record else 1
    t_nodes = np.empty(cap + 1)
    coeffs = np.empty((cap, N_DENSE + 1, n))
    t_nodes[0] = t0
    n_rec = 0
    n_rejected = 0
    if t1 == t0:
        return STATUS_DONE, t, y, t_nodes[:1], coeffs[:0], 0, 0

    K = np.zeros((N_EXT, n))
    f = np.empty(n)
    rhs(kind, t, y, p, f)
    h_abs = _select_initial_step(kind, t0, y, f, direction, rtol, atol, p)
    y_new = np.empty(n)
    dense = np.empty((N_DENSE + 1, n))
    Ke = np.zeros((N_EXT, n))
    ye = np.empty(n)
    crossings = 0
    use_events = n_cross > 0
    g_old = _linear(normal, y) - offset if use_events else 0.0
    min_step = 10.0 * max(abs(t), 1e-290) * 2.220446049250313e-16
    step_rejected = False
    h_next = h_abs

    for step in range(max_steps):
        if h_abs > max_step:
            h_abs = max_step
        if h_abs < min_step:
            return STATUS_STEP_UNDERFLOW, t, y, t_nodes[: n_rec + 1], coeffs[:n_rec], n_rec, n_rejected
        h = h_abs * direction
        t_new = t + h
        if direction * (t_new - t1) > 0.0:
            t_new = t1
        h = t_new - t
        h_abs = abs(h)

        K[0, :] = f
        _stages(kind, t, y, h, p, K, y_new)
        err = _error_norm(K, h, y, y_new, rtol, atol)
        if err < 1.0:
            if err == 0.0:
                factor = MAX_FACTOR
            else:
                factor = min(MAX_FACTOR, SAFETY * err**ERROR_EXPONENT)
            if step_rejected:
                factor = min(1.0, factor)
            h_next = h_abs * factor
            step_rejected = False
        else:
            h_abs *= max(MIN_FACTOR, SAFETY * err**ERROR_EXPONENT)
            step_rejected = True
            n_rejected += 1
            continue

        # accepted step t -> t_new
        have_dense = False
        if use_events:
            g_new = _linear(normal, y_new) - offset
            crossed = (g_old < 0.0 and g_new > 0.0) or (g_old > 0.0 and g_new < 0.0) or (g_new == 0.0 and g_old != 0.0)
            if crossed:
                time_dir = direction if g_new > g_old else -direction
                if ev_dir == 0 or time_dir == ev_dir:
                    _dense(kind, t, y, y_new, h, p, K, dense)
                    have_dense = True
                    # bracketed root of the interpolant on [0, 1]
                    lo = 0.0
                    hi = 1.0
                    glo = g_old
                    ghi = g_new
                    x = 0.5
                    for it in range(200):
                        # Illinois-style false position, falling back to bisection
                        if ghi != glo:
                            x = hi - ghi * (hi - lo) / (ghi - glo)
                        if not (lo < x < hi):
                            x = 0.5 * (lo + hi)
                        if it % 3 == 2:
                            x = 0.5 * (lo + hi)
                        gx = _dense_linear(dense, x, normal) - offset
                        if gx == 0.0 or hi - lo < 1e-16:
                            break
                        if (gx < 0.0) == (glo < 0.0):
                            lo = x
                            glo = gx
                        else:
                            hi = x
                            ghi = gx
                    te = t + x * h
                    # Newton refinement on the true flow: direct steps from (t, y)
                    gdot = 0.0
                    for it in range(6):
                        Ke[0, :] = f
                        _stages(kind, t, y, te - t, p, Ke, ye)
                        ge = _linear(normal, ye) - offset
                        gdot = _linear(normal, Ke[N_STAGES])
                        if gdot == 0.0:
                            break
                        dt = -ge / gdot
                        te += dt
                        if abs(dt) < 1e-15 * max(1.0, abs(te)) or abs(ge) < 1e-15:
                            break
                    Ke[0, :] = f
                    _stages(kind, t, y, te - t, p, Ke, ye)
                    passes = True
                    if guard_sign != 0.0:
                        passes = guard_sign * _linear(guard_normal, ye) > 0.0
                    if passes:
                        crossings += 1
                        if crossings >= n_cross:
                            if record:
                                if n_rec >= cap:
                                    cap2 = 2 * cap
                                    tn2 = np.empty(cap2 + 1)
                                    tn2[: n_rec + 1] = t_nodes[: n_rec + 1]
                                    co2 = np.empty((cap2, N_DENSE + 1, n))
                                    co2[:n_rec] = coeffs[:n_rec]
                                    t_nodes = tn2
                                    coeffs = co2
                                    cap = cap2
                                _dense(kind, t, y, ye, te - t, p, Ke, coeffs[n_rec])
                                n_rec += 1
                                t_nodes[n_rec] = te
                            status = STATUS_EVENT
                            if abs(gdot) < tangency_tol:
                                status = STATUS_TANGENCY
                            return status, te, ye, t_nodes[: n_rec + 1], coeffs[:n_rec], n_rec, n_rejected
            g_old = g_new

        if record:
            if n_rec >= cap:
                cap2 = 2 * cap
                tn2 = np.empty(cap2 + 1)
                tn2[: n_rec + 1] = t_nodes[: n_rec + 1]
                co2 = np.empty((cap2, N_DENSE + 1, n))
                co2[:n_rec] = coeffs[:n_rec]
                t_nodes = tn2
                coeffs = co2
                cap = cap2
            if have_dense:
                coeffs[n_rec] = dense
            else:
                _dense(kind, t, y, y_new, h, p, K, coeffs[n_rec])
            n_rec += 1
            t_nodes[n_rec] = t_new

        t = t_new
        y[:] = y_new
        f[:] = K[N_STAGES]
        h_abs = h_next
        min_step = 10.0 * max(abs(t), 1e-290) * 2.220446049250313e-16

        if np.sqrt(y[0] * y[0] + y[1] * y[1]) < r_min:
            return STATUS_COLLISION, t, y, t_nodes[: n_rec + 1], coeffs[:n_rec], n_rec, n_rejected
        if t == t1:
            return STATUS_DONE, t, y, t_nodes[: n_rec + 1], coeffs[:n_rec], n_rec, n_rejected

    return STATUS_MAX_STEPS, t, y, t_nodes[: n_rec + 1], coeffs[:n_rec], n_rec, n_rejected

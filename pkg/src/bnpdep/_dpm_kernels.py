"""Compiled inner loops for the truncated DPM models.

Both models share one memory layout so that a model switch only touches the
arrays it has to:

    mu  (K, 2)   component means; column j is group j under the
                 independent model, rows are 2-D means under the joint one
    S   (2, 2)   marginal covariance; the off-diagonal is only meaningful
                 under the joint model and is held at 0 otherwise
    ri           index into the r grid
    vI, wI (2, K), dI (2,), gI (2, n)   independent-model sticks/labels
    vJ, wJ (K,),   dJ (1,),  gJ (n,)    joint-model sticks/labels

Sticks are stored as ``log(1 - v_l)`` (``-inf`` for the last one), which
keeps draws exact when a concentration parameter is tiny and ``v_l`` is
within rounding of 1.

``tau`` multiplies every log-likelihood term.  ``tau = 1`` is the posterior,
``tau = 0`` turns every update into a draw from the prior (used to validate
the trans-dimensional move in isolation).

All randomness comes from the numba-internal generator, which is
thread-local; callers seed it once per task with :func:`seed`.
"""

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
LOG_HALF = math.log(0.5)
MAX_RETRIES = 10

OK = 0
ABORTED = 1

_jit = njit(cache=True, nogil=True)


@_jit
def seed(s):
    np.random.seed(s)


# ---------------------------------------------------------------------------
# scalar densities
# ---------------------------------------------------------------------------

@_jit
def log_gamma_pdf(x, shape, rate):
    if x <= 0.0:
        return -np.inf
    return (shape * math.log(rate) - math.lgamma(shape)
            + (shape - 1.0) * math.log(x) - rate * x)


@_jit
def log_beta1_pdf(lv, d):
    """log Beta(v | 1, d) at ``lv = log(1 - v)``."""
    return math.log(d) + (d - 1.0) * lv


@_jit
def log_iw1_pdf(s, df, psi):
    """log IW_1(s | df, psi), i.e. inverse gamma(df/2, psi/2)."""
    h = 0.5 * df
    return (h * math.log(0.5 * psi) - math.lgamma(h)
            - (h + 1.0) * math.log(s) - 0.5 * psi / s)


@_jit
def det2(m):
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


@_jit
def inv2(m, out):
    dt = det2(m)
    out[0, 0] = m[1, 1] / dt
    out[1, 1] = m[0, 0] / dt
    out[0, 1] = -m[0, 1] / dt
    out[1, 0] = -m[1, 0] / dt
    return dt


@_jit
def log_iw2_pdf(s, df, psi):
    """log IW_2(s | df, psi) in matrix-entry coordinates."""
    ds = det2(s)
    dp = det2(psi)
    si = np.empty((2, 2))
    inv2(s, si)
    tr = (psi[0, 0] * si[0, 0] + psi[0, 1] * si[1, 0]
          + psi[1, 0] * si[0, 1] + psi[1, 1] * si[1, 1])
    h = 0.5 * df
    lmg = 0.5 * math.log(math.pi) + math.lgamma(h) + math.lgamma(h - 0.5)
    return (h * math.log(dp) - df * math.log(2.0) - lmg
            - 0.5 * (df + 3.0) * math.log(ds) - 0.5 * tr)


@_jit
def log_norm1(x, m, var):
    dx = x - m
    return -0.5 * (LOG_2PI + math.log(var) + dx * dx / var)


@_jit
def log_norm2(x0, x1, m0, m1, cinv, logdet):
    d0 = x0 - m0
    d1 = x1 - m1
    q = cinv[0, 0] * d0 * d0 + 2.0 * cinv[0, 1] * d0 * d1 + cinv[1, 1] * d1 * d1
    return -(LOG_2PI + 0.5 * logdet + 0.5 * q)


# ---------------------------------------------------------------------------
# draws
# ---------------------------------------------------------------------------

@_jit
def draw_iw2(df, psi, out):
    """Bartlett draw of IW_2(df, psi); returns False on numerical failure."""
    pinv = np.empty((2, 2))
    if inv2(psi, pinv) <= 0.0:
        return False
    # chol of psi^{-1}
    l00 = math.sqrt(pinv[0, 0])
    l10 = pinv[1, 0] / l00
    t = pinv[1, 1] - l10 * l10
    if not t > 0.0:
        return False
    l11 = math.sqrt(t)
    a00 = math.sqrt(np.random.chisquare(df))
    a11 = math.sqrt(np.random.chisquare(df - 1.0))
    a10 = np.random.normal()
    # B = L A (lower triangular)
    b00 = l00 * a00
    b10 = l10 * a00 + l11 * a10
    b11 = l11 * a11
    w = np.empty((2, 2))
    w[0, 0] = b00 * b00
    w[0, 1] = b00 * b10
    w[1, 0] = b00 * b10
    w[1, 1] = b10 * b10 + b11 * b11
    if inv2(w, out) <= 0.0:
        return False
    avg = 0.5 * (out[0, 1] + out[1, 0])
    out[0, 1] = avg
    out[1, 0] = avg
    return np.isfinite(out[0, 0]) and np.isfinite(out[1, 1]) and det2(out) > 0.0


@_jit
def log_gamma_draw(shape):
    """log of a Gamma(shape, 1) draw, exact for tiny shapes."""
    if shape >= 1.0:
        return math.log(np.random.gamma(shape, 1.0))
    # Gamma(a) = Gamma(a + 1) * U^(1/a)
    return (math.log(np.random.gamma(shape + 1.0, 1.0))
            + math.log(1.0 - np.random.random()) / shape)


@_jit
def draw_log1m_beta(a, b):
    """log(1 - v) for v ~ Beta(a, b)."""
    lx = log_gamma_draw(b)
    ly = log_gamma_draw(a)
    m = max(lx, ly)
    return lx - (m + math.log(math.exp(lx - m) + math.exp(ly - m)))


@_jit
def draw_concentration(shape, rate):
    """Gamma(shape, rate) draw floored at 1e-300 to stay positive."""
    return max(math.exp(log_gamma_draw(shape)) / rate, 1e-300)


@_jit
def stick_weights(lv, w):
    """Weights from sticks stored as ``lv_l = log(1 - v_l)``."""
    cum = 0.0
    for l in range(lv.shape[0]):
        w[l] = -math.expm1(lv[l]) * math.exp(cum)
        cum += lv[l]


@_jit
def draw_prior_sticks(d, lv, w):
    """v_l ~ Beta(1, d) for l < K, v_K = 1; returns sum of log densities."""
    k = lv.shape[0]
    lp = 0.0
    for l in range(k - 1):
        # 1 - v = U^(1/d)
        x = math.log(1.0 - np.random.random()) / d
        lv[l] = x
        lp += log_beta1_pdf(x, d)
    lv[k - 1] = -np.inf
    stick_weights(lv, w)
    return lp


@_jit
def log_prior_sticks(lv, d):
    lp = 0.0
    for l in range(lv.shape[0] - 1):
        lp += log_beta1_pdf(lv[l], d)
    return lp


@_jit
def sample_log_categorical(lp):
    """Draw an index with probability proportional to exp(lp).

    Returns ``(index, log probability of that index)``.
    """
    k = lp.shape[0]
    m = lp[0]
    for l in range(1, k):
        if lp[l] > m:
            m = lp[l]
    tot = 0.0
    for l in range(k):
        tot += math.exp(lp[l] - m)
    u = np.random.random() * tot
    acc = 0.0
    idx = k - 1
    for l in range(k):
        acc += math.exp(lp[l] - m)
        if u < acc:
            idx = l
            break
    # guard against landing on a zero-probability tail entry by round-off
    while lp[idx] == -np.inf and idx > 0:
        idx -= 1
    return idx, lp[idx] - m - math.log(tot)


@_jit
def log_categorical(lp, idx):
    k = lp.shape[0]
    m = lp[0]
    for l in range(1, k):
        if lp[l] > m:
            m = lp[l]
    tot = 0.0
    for l in range(k):
        tot += math.exp(lp[l] - m)
    return lp[idx] - m - math.log(tot)


# ---------------------------------------------------------------------------
# label full conditionals
# ---------------------------------------------------------------------------

@_jit
def labels_1d(xcol, mucol, var, w, tau, g, draw):
    """Independent-model labels for one group.

    With ``draw`` the labels are sampled in place; otherwise the existing
    labels are scored.  Either way the summed log conditional probability of
    the final labels is returned.
    """
    n = xcol.shape[0]
    k = mucol.shape[0]
    lp = np.empty(k)
    logw = np.empty(k)
    for l in range(k):
        logw[l] = math.log(w[l]) if w[l] > 0.0 else -np.inf
    c = -0.5 * tau * (LOG_2PI + math.log(var))
    h = 0.5 * tau / var
    tot = 0.0
    for i in range(n):
        xi = xcol[i]
        for l in range(k):
            dx = xi - mucol[l]
            lp[l] = logw[l] + c - h * dx * dx
        if draw:
            idx, lq = sample_log_categorical(lp)
            g[i] = idx
            tot += lq
        else:
            tot += log_categorical(lp, g[i])
    return tot


@_jit
def labels_2d(x, mu, var0, var1, w, tau, g, draw):
    """Joint-model labels with diagonal component covariance."""
    n = x.shape[0]
    k = mu.shape[0]
    lp = np.empty(k)
    logw = np.empty(k)
    for l in range(k):
        logw[l] = math.log(w[l]) if w[l] > 0.0 else -np.inf
    c = -0.5 * tau * (2.0 * LOG_2PI + math.log(var0) + math.log(var1))
    h0 = 0.5 * tau / var0
    h1 = 0.5 * tau / var1
    tot = 0.0
    for i in range(n):
        x0 = x[i, 0]
        x1 = x[i, 1]
        for l in range(k):
            d0 = x0 - mu[l, 0]
            d1 = x1 - mu[l, 1]
            lp[l] = logw[l] + c - h0 * d0 * d0 - h1 * d1 * d1
        if draw:
            idx, lq = sample_log_categorical(lp)
            g[i] = idx
            tot += lq
        else:
            tot += log_categorical(lp, g[i])
    return tot


# ---------------------------------------------------------------------------
# stick and concentration updates (shared by both models)
# ---------------------------------------------------------------------------

@_jit
def update_sticks(g, v, w, d, a, b):
    """Gibbs update of the sticks (stored as log(1 - v)) given labels, then
    of d given the sticks.  Returns the new d."""
    k = v.shape[0]
    n = g.shape[0]
    cnt = np.zeros(k)
    for i in range(n):
        cnt[g[i]] += 1.0
    above = float(n)
    for l in range(k - 1):
        above -= cnt[l]
        v[l] = draw_log1m_beta(cnt[l] + 1.0, above + d)
    v[k - 1] = -np.inf
    stick_weights(v, w)
    rate = b
    for l in range(k - 1):
        rate -= v[l]
    return draw_concentration(k + a - 1.0, rate)


# ---------------------------------------------------------------------------
# independent model
# ---------------------------------------------------------------------------

@_jit
def _resid_ss_1d(xcol, mucol, g):
    ss = 0.0
    for i in range(xcol.shape[0]):
        dx = xcol[i] - mucol[g[i]]
        ss += dx * dx
    return ss


@_jit
def _stats_1d(xcol, g, cnt, sx, sxx):
    cnt[:] = 0.0
    sx[:] = 0.0
    sxx[:] = 0.0
    for i in range(xcol.shape[0]):
        l = g[i]
        cnt[l] += 1.0
        sx[l] += xcol[i]
        sxx[l] += xcol[i] * xcol[i]


@_jit
def draw_means_1d(cnt, sx, mucol, var, om, tau):
    for l in range(mucol.shape[0]):
        prec = tau * cnt[l] / var + 1.0 / om
        m = tau * sx[l] / var / prec
        mu_l = m + np.random.normal() / math.sqrt(prec)
        mucol[l] = mu_l


@_jit
def collapsed_loglik_1d(cnt, sx, sxx, var, om):
    """log of prod_l int prod_{i in l} N(x_i | m, var) N(m | 0, om) dm."""
    tot = 0.0
    for l in range(cnt.shape[0]):
        nl = cnt[l]
        if nl == 0.0:
            continue
        xb = sx[l] / nl
        w = sxx[l] - nl * xb * xb
        v = om + var / nl
        tot += (-0.5 * nl * (LOG_2PI + math.log(var)) - 0.5 * w / var
                + 0.5 * (LOG_2PI + math.log(var / nl))
                - 0.5 * (LOG_2PI + math.log(v)) - 0.5 * xb * xb / v)
    return tot


@_jit
def sweep_indep(x, mu, S, vI, wI, dI, gI, ri, rgrid, a, b, df, wsc, tau):
    """One systematic scan of the independent-model conditionals.

    Per group: means, then (S_j, empty-component means) as a block, labels,
    sticks, concentration.  Finally (r, all means) as a block with r drawn
    from its conditional with the means integrated out.  ``tau`` is the
    likelihood switch (1 posterior, 0 prior).  Returns the new r index.
    """
    n = x.shape[0]
    k = mu.shape[0]
    r = rgrid[ri]
    cnt = np.empty(k)
    sx = np.empty(k)
    sxx = np.empty(k)
    for j in range(2):
        xcol = x[:, j]
        g = gI[j]
        _stats_1d(xcol, g, cnt, sx, sxx)
        draw_means_1d(cnt, sx, mu[:, j], r * S[j, j], (1.0 - r) * S[j, j], tau)
        ss = _resid_ss_1d(xcol, mu[:, j], g)
        sm = 0.0
        kocc = 0
        for l in range(k):
            if cnt[l] > 0.0:
                sm += mu[l, j] * mu[l, j]
                kocc += 1
        psi = tau * ss / r + sm / (1.0 - r) + df[j] * wsc[j]
        S[j, j] = psi / np.random.chisquare(tau * n + kocc + df[j])
        sd = math.sqrt((1.0 - r) * S[j, j])
        for l in range(k):
            if cnt[l] == 0.0:
                mu[l, j] = sd * np.random.normal()
        labels_1d(xcol, mu[:, j], r * S[j, j], wI[j], tau, g, True)
        dI[j] = update_sticks(g, vI[j], wI[j], dI[j], a, b)
    S[0, 1] = 0.0
    S[1, 0] = 0.0
    nr = rgrid.shape[0]
    lp = np.zeros(nr)
    if tau != 0.0:
        for j in range(2):
            _stats_1d(x[:, j], gI[j], cnt, sx, sxx)
            s = S[j, j]
            for m in range(nr):
                lp[m] += collapsed_loglik_1d(cnt, sx, sxx, rgrid[m] * s,
                                             (1.0 - rgrid[m]) * s)
    ri, _ = sample_log_categorical(lp)
    r = rgrid[ri]
    for j in range(2):
        _stats_1d(x[:, j], gI[j], cnt, sx, sxx)
        draw_means_1d(cnt, sx, mu[:, j], r * S[j, j], (1.0 - r) * S[j, j], tau)
    return ri


@_jit
def log_lik_indep(x, mu, S, gI, r):
    tot = 0.0
    for j in range(2):
        var = r * S[j, j]
        for i in range(x.shape[0]):
            tot += log_norm1(x[i, j], mu[gI[j, i], j], var)
    return tot


@_jit
def log_prior_indep(mu, S, vI, wI, dI, gI, ri, rgrid, a, b, df, wsc,
                    sticks=True):
    k = mu.shape[0]
    r = rgrid[ri]
    lp = -math.log(rgrid.shape[0])
    for j in range(2):
        s = S[j, j]
        for l in range(k):
            lp += log_norm1(mu[l, j], 0.0, (1.0 - r) * s)
        lp += log_iw1_pdf(s, df[j], df[j] * wsc[j])
        if sticks:
            lp += log_prior_sticks(vI[j], dI[j])
        lp += log_gamma_pdf(dI[j], a, b)
        for i in range(gI.shape[1]):
            lp += math.log(wI[j, gI[j, i]])
    return lp


# ---------------------------------------------------------------------------
# joint model
# ---------------------------------------------------------------------------

@_jit
def _resid_cross(x, mu, g, out):
    out[:, :] = 0.0
    for i in range(x.shape[0]):
        d0 = x[i, 0] - mu[g[i], 0]
        d1 = x[i, 1] - mu[g[i], 1]
        out[0, 0] += d0 * d0
        out[0, 1] += d0 * d1
        out[1, 1] += d1 * d1
    out[1, 0] = out[0, 1]


@_jit
def _stats_2d(x, g, cnt, sx, sxx):
    """Per-component counts, sums and centred-free cross products."""
    cnt[:] = 0.0
    sx[:, :] = 0.0
    sxx[:, :] = 0.0
    for i in range(x.shape[0]):
        l = g[i]
        x0 = x[i, 0]
        x1 = x[i, 1]
        cnt[l] += 1.0
        sx[l, 0] += x0
        sx[l, 1] += x1
        sxx[l, 0] += x0 * x0
        sxx[l, 1] += x1 * x1


@_jit
def draw_means_2d(cnt, sx, mu, var0, var1, S, r, tau):
    """mu_l | rest with component covariance diag(var0, var1) and prior
    covariance (1 - r) S.  Returns False if a precision is not SPD."""
    om_inv = np.empty((2, 2))
    if inv2(S, om_inv) <= 0.0:
        return False
    om_inv /= 1.0 - r
    p = np.empty((2, 2))
    c = np.empty((2, 2))
    for l in range(mu.shape[0]):
        p[0, 0] = tau * cnt[l] / var0 + om_inv[0, 0]
        p[1, 1] = tau * cnt[l] / var1 + om_inv[1, 1]
        p[0, 1] = om_inv[0, 1]
        p[1, 0] = om_inv[1, 0]
        if inv2(p, c) <= 0.0:
            return False
        h0 = tau * sx[l, 0] / var0
        h1 = tau * sx[l, 1] / var1
        l00 = math.sqrt(c[0, 0])
        l10 = c[1, 0] / l00
        t = c[1, 1] - l10 * l10
        l11 = math.sqrt(t) if t > 0.0 else 0.0
        z0 = np.random.normal()
        z1 = np.random.normal()
        mu[l, 0] = c[0, 0] * h0 + c[0, 1] * h1 + l00 * z0
        mu[l, 1] = c[1, 0] * h0 + c[1, 1] * h1 + l10 * z0 + l11 * z1
    return True


@_jit
def draw_empty_means_2d(cnt, mu, S, r):
    l00 = math.sqrt((1.0 - r) * S[0, 0])
    l10 = (1.0 - r) * S[1, 0] / l00
    l11 = math.sqrt(max((1.0 - r) * S[1, 1] - l10 * l10, 0.0))
    for l in range(mu.shape[0]):
        if cnt[l] == 0.0:
            z0 = np.random.normal()
            z1 = np.random.normal()
            mu[l, 0] = l00 * z0
            mu[l, 1] = l10 * z0 + l11 * z1


@_jit
def collapsed_loglik_2d(cnt, sx, sxx, var0, var1, S, r):
    """Joint-model analogue of :func:`collapsed_loglik_1d`."""
    tot = 0.0
    om00 = (1.0 - r) * S[0, 0]
    om01 = (1.0 - r) * S[0, 1]
    om11 = (1.0 - r) * S[1, 1]
    lv = math.log(var0) + math.log(var1)
    for l in range(cnt.shape[0]):
        nl = cnt[l]
        if nl == 0.0:
            continue
        xb0 = sx[l, 0] / nl
        xb1 = sx[l, 1] / nl
        w = ((sxx[l, 0] - nl * xb0 * xb0) / var0
             + (sxx[l, 1] - nl * xb1 * xb1) / var1)
        c00 = om00 + var0 / nl
        c11 = om11 + var1 / nl
        dt = c00 * c11 - om01 * om01
        q = (c11 * xb0 * xb0 - 2.0 * om01 * xb0 * xb1 + c00 * xb1 * xb1) / dt
        tot += (-nl * LOG_2PI - 0.5 * nl * lv - 0.5 * w
                + LOG_2PI + 0.5 * lv - math.log(nl)
                - LOG_2PI - 0.5 * math.log(dt) - 0.5 * q)
    return tot


@_jit
def _s_weight(s, R, n, r, tau):
    """log(target / proposal) for the joint-model covariance update."""
    if tau == 0.0:
        return 0.0
    si = np.empty((2, 2))
    ds = inv2(s, si)
    tr = R[0, 0] * si[0, 0] + 2.0 * R[0, 1] * si[0, 1] + R[1, 1] * si[1, 1]
    return tau * (-0.5 * n * math.log(s[0, 0] * s[1, 1])
                  - 0.5 * (R[0, 0] / s[0, 0] + R[1, 1] / s[1, 1]) / r
                  + 0.5 * n * math.log(ds) + 0.5 * tr / r)


@_jit
def sweep_joint(x, mu, S, vJ, wJ, dJ, gJ, ri, rgrid, a, b, df, wsc, tau):
    """One systematic scan of the joint-model conditionals.

    Same block structure as :func:`sweep_indep`.  The component covariance
    is ``r diag(S)`` while the conjugate form ``IW(N + K + rho, B)`` assumes
    ``r S``; that draw is used as an independence Metropolis-Hastings
    proposal and corrected exactly.  Returns ``(new r index, status)``.
    """
    n = x.shape[0]
    k = mu.shape[0]
    r = rgrid[ri]
    cnt = np.empty(k)
    sx = np.empty((k, 2))
    sxx = np.empty((k, 2))
    _stats_2d(x, gJ, cnt, sx, sxx)
    if not draw_means_2d(cnt, sx, mu, r * S[0, 0], r * S[1, 1], S, r, tau):
        return ri, ABORTED
    R = np.empty((2, 2))
    M = np.zeros((2, 2))
    _resid_cross(x, mu, gJ, R)
    kocc = 0
    for l in range(k):
        if cnt[l] > 0.0:
            kocc += 1
            M[0, 0] += mu[l, 0] * mu[l, 0]
            M[0, 1] += mu[l, 0] * mu[l, 1]
            M[1, 1] += mu[l, 1] * mu[l, 1]
    M[1, 0] = M[0, 1]
    psi = np.empty((2, 2))
    for u in range(2):
        for v in range(2):
            psi[u, v] = tau * R[u, v] / r + M[u, v] / (1.0 - r) + df[2] * wsc[u, v]
    prop = np.empty((2, 2))
    ok = False
    for _ in range(MAX_RETRIES):
        if draw_iw2(tau * n + kocc + df[2], psi, prop):
            ok = True
            break
    if not ok:
        return ri, ABORTED
    logu = math.log(np.random.random())
    if logu < _s_weight(prop, R, n, r, tau) - _s_weight(S, R, n, r, tau):
        S[:, :] = prop
    draw_empty_means_2d(cnt, mu, S, r)
    labels_2d(x, mu, r * S[0, 0], r * S[1, 1], wJ, tau, gJ, True)
    dJ[0] = update_sticks(gJ, vJ, wJ, dJ[0], a, b)
    nr = rgrid.shape[0]
    lp = np.zeros(nr)
    _stats_2d(x, gJ, cnt, sx, sxx)
    if tau != 0.0:
        for m in range(nr):
            rm = rgrid[m]
            lp[m] = collapsed_loglik_2d(cnt, sx, sxx, rm * S[0, 0],
                                        rm * S[1, 1], S, rm)
    ri, _ = sample_log_categorical(lp)
    r = rgrid[ri]
    if not draw_means_2d(cnt, sx, mu, r * S[0, 0], r * S[1, 1], S, r, tau):
        return ri, ABORTED
    return ri, OK


@_jit
def log_lik_joint(x, mu, S, gJ, r):
    var0 = r * S[0, 0]
    var1 = r * S[1, 1]
    tot = 0.0
    for i in range(x.shape[0]):
        tot += log_norm1(x[i, 0], mu[gJ[i], 0], var0)
        tot += log_norm1(x[i, 1], mu[gJ[i], 1], var1)
    return tot


@_jit
def log_prior_joint(mu, S, vJ, wJ, dJ, gJ, ri, rgrid, a, b, df, wsc,
                    sticks=True):
    """Joint-model log prior.

    The covariance density is expressed in (variance, variance, correlation)
    coordinates, the coordinates in which the cross-model map is the
    identity; this adds ``log sqrt(S11 S22)`` to the matrix-entry density.
    ``sticks=False`` drops the stick-breaking terms (see ``rj_step``).
    """
    k = mu.shape[0]
    r = rgrid[ri]
    lp = -math.log(rgrid.shape[0])
    om = np.empty((2, 2))
    om[:, :] = S * (1.0 - r)
    oinv = np.empty((2, 2))
    dt = inv2(om, oinv)
    ld = math.log(dt)
    for l in range(k):
        lp += log_norm2(mu[l, 0], mu[l, 1], 0.0, 0.0, oinv, ld)
    psi = np.empty((2, 2))
    psi[:, :] = wsc * df[2]
    lp += log_iw2_pdf(S, df[2], psi) + 0.5 * math.log(S[0, 0] * S[1, 1])
    if sticks:
        lp += log_prior_sticks(vJ, dJ[0])
    lp += log_gamma_pdf(dJ[0], a, b)
    for i in range(gJ.shape[0]):
        lp += math.log(wJ[gJ[i]])
    return lp


# ---------------------------------------------------------------------------
# cross-model proposals
# ---------------------------------------------------------------------------

@_jit
def log_q_joint_part(x, mu, S, vJ, wJ, dJ, gJ, r, tau, dbar, sticks=True):
    """log density of proposing the joint-only block given the shared one."""
    rho = S[0, 1] / math.sqrt(S[0, 0] * S[1, 1])
    lq = LOG_HALF if abs(rho) < 1.0 else -np.inf
    lq += log_gamma_pdf(dJ[0], dbar, 1.0)
    if sticks:
        lq += log_prior_sticks(vJ, dJ[0])
    g = gJ.copy()
    lq += labels_2d(x, mu, r * S[0, 0], r * S[1, 1], wJ, tau, g, False)
    return lq


@_jit
def log_q_indep_part(x, mu, S, vI, wI, dI, gI, r, tau, dj, sticks=True):
    lq = 0.0
    for j in range(2):
        lq += log_gamma_pdf(dI[j], dj, 1.0)
        if sticks:
            lq += log_prior_sticks(vI[j], dI[j])
        g = gI[j].copy()
        lq += labels_1d(x[:, j], mu[:, j], r * S[j, j], wI[j], tau, g, False)
    return lq


@_jit
def propose_i_to_j(x, mu, S, vI, wI, dI, gI, r, tau, S_new, vJ, wJ, dJ, gJ,
                   sticks=True):
    """Fill the joint-only block from the current independent state.

    Returns ``(log q forward, log q reverse)``; ``sticks=False`` leaves out
    the stick-breaking densities, which equal their prior counterparts.
    """
    rho = np.random.uniform(-1.0, 1.0)
    S_new[:, :] = S
    cval = rho * math.sqrt(S[0, 0] * S[1, 1])
    S_new[0, 1] = cval
    S_new[1, 0] = cval
    dbar = 0.5 * (dI[0] + dI[1])
    dJ[0] = draw_concentration(dbar, 1.0)
    lq = LOG_HALF + log_gamma_pdf(dJ[0], dbar, 1.0)
    lsj = draw_prior_sticks(dJ[0], vJ, wJ)
    if sticks:
        lq += lsj
    lq += labels_2d(x, mu, r * S[0, 0], r * S[1, 1], wJ, tau, gJ, True)
    lrev = log_q_indep_part(x, mu, S, vI, wI, dI, gI, r, tau, dJ[0], sticks)
    return lq, lrev


@_jit
def propose_j_to_i(x, mu, S, vJ, wJ, dJ, gJ, r, tau, S_new, vI, wI, dI, gI,
                   sticks=True):
    S_new[:, :] = S
    S_new[0, 1] = 0.0
    S_new[1, 0] = 0.0
    lq = 0.0
    for j in range(2):
        dI[j] = draw_concentration(dJ[0], 1.0)
        lq += log_gamma_pdf(dI[j], dJ[0], 1.0)
        lsi = draw_prior_sticks(dI[j], vI[j], wI[j])
        if sticks:
            lq += lsi
        lq += labels_1d(x[:, j], mu[:, j], r * S[j, j], wI[j], tau, gI[j], True)
    dbar = 0.5 * (dI[0] + dI[1])
    lrev = log_q_joint_part(x, mu, S, vJ, wJ, dJ, gJ, r, tau, dbar, sticks)
    return lq, lrev


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

@_jit
def draw_prior_indep(n, mu, S, vI, wI, dI, gI, rgrid, a, b, df, wsc):
    """Draw the independent-model parameters (and labels) from the prior."""
    k = mu.shape[0]
    ri = np.random.randint(0, rgrid.shape[0])
    r = rgrid[ri]
    S[:, :] = 0.0
    for j in range(2):
        S[j, j] = df[j] * wsc[j] / np.random.chisquare(df[j])
        sd = math.sqrt((1.0 - r) * S[j, j])
        for l in range(k):
            mu[l, j] = sd * np.random.normal()
        dI[j] = draw_concentration(a, b)
        draw_prior_sticks(dI[j], vI[j], wI[j])
        lp = np.empty(k)
        for l in range(k):
            lp[l] = math.log(wI[j, l]) if wI[j, l] > 0.0 else -np.inf
        for i in range(n):
            gI[j, i], _ = sample_log_categorical(lp)
    return ri


@_jit
def draw_prior_joint(n, mu, S, vJ, wJ, dJ, gJ, rgrid, a, b, df, wsc):
    k = mu.shape[0]
    ri = np.random.randint(0, rgrid.shape[0])
    r = rgrid[ri]
    psi = np.empty((2, 2))
    psi[:, :] = wsc * df[2]
    while not draw_iw2(df[2], psi, S):
        pass
    l00 = math.sqrt((1.0 - r) * S[0, 0])
    l10 = (1.0 - r) * S[1, 0] / l00
    l11 = math.sqrt(max((1.0 - r) * S[1, 1] - l10 * l10, 0.0))
    for l in range(k):
        z0 = np.random.normal()
        z1 = np.random.normal()
        mu[l, 0] = l00 * z0
        mu[l, 1] = l10 * z0 + l11 * z1
    dJ[0] = draw_concentration(a, b)
    draw_prior_sticks(dJ[0], vJ, wJ)
    lp = np.empty(k)
    for l in range(k):
        lp[l] = math.log(wJ[l]) if wJ[l] > 0.0 else -np.inf
    for i in range(n):
        gJ[i], _ = sample_log_categorical(lp)
    return ri


@_jit
def init_state(x, mu, S, vI, wI, dI, gI, vJ, wJ, dJ, gJ, rgrid, a, b, df,
               wsc1, wscj, r_init, tau, model):
    """Step 0 from the data.

    Component means start at ``K`` distinct observations (cycled if
    ``K > n``), ``S`` at the sample covariance, ``r`` at the grid value
    closest to ``r_init``; labels, sticks and concentrations of both blocks
    are then drawn from their conditionals.  ``r_init <= 0`` draws every
    parameter of the starting model from the prior instead.  Returns the r
    index.
    """
    n = x.shape[0]
    k = mu.shape[0]
    if r_init <= 0.0:
        if model == 0:
            ri = draw_prior_indep(n, mu, S, vI, wI, dI, gI, rgrid, a, b, df, wsc1)
            for j in range(2):
                labels_1d(x[:, j], mu[:, j], rgrid[ri] * S[j, j], wI[j], tau,
                          gI[j], True)
        else:
            ri = draw_prior_joint(n, mu, S, vJ, wJ, dJ, gJ, rgrid, a, b, df, wscj)
            labels_2d(x, mu, rgrid[ri] * S[0, 0], rgrid[ri] * S[1, 1], wJ, tau,
                      gJ, True)
        return ri
    ri = 0
    for m in range(rgrid.shape[0]):
        if abs(rgrid[m] - r_init) < abs(rgrid[ri] - r_init):
            ri = m
    r = rgrid[ri]
    perm = np.random.permutation(n)
    for l in range(k):
        mu[l, 0] = x[perm[l % n], 0]
        mu[l, 1] = x[perm[l % n], 1]
    m0 = 0.0
    m1 = 0.0
    for i in range(n):
        m0 += x[i, 0]
        m1 += x[i, 1]
    m0 /= n
    m1 /= n
    S[:, :] = 0.0
    for i in range(n):
        S[0, 0] += (x[i, 0] - m0) ** 2
        S[0, 1] += (x[i, 0] - m0) * (x[i, 1] - m1)
        S[1, 1] += (x[i, 1] - m1) ** 2
    S /= n - 1.0
    S[1, 0] = S[0, 1]
    # uniform weights before the first label draw
    wJ[:] = 1.0 / k
    wI[:, :] = 1.0 / k
    labels_2d(x, mu, r * S[0, 0], r * S[1, 1], wJ, tau, gJ, True)
    dJ[0] = a / b
    dJ[0] = update_sticks(gJ, vJ, wJ, dJ[0], a, b)
    for j in range(2):
        labels_1d(x[:, j], mu[:, j], r * S[j, j], wI[j], tau, gI[j], True)
        dI[j] = a / b
        dI[j] = update_sticks(gI[j], vI[j], wI[j], dI[j], a, b)
    if model == 0:
        S[0, 1] = 0.0
        S[1, 0] = 0.0
    return ri


@_jit
def rj_step(x, mu, S, vI, wI, dI, gI, vJ, wJ, dJ, gJ, ri, model, rgrid, a, b,
            df, wsc1, wscj, tau, S_p, vI_p, wI_p, dI_p, gI_p, vJ_p, wJ_p, dJ_p,
            gJ_p, counts):
    """One iteration: Gibbs sweep of the active model, then a model-switch
    proposal with probability 0.5.  ``*_p`` are scratch buffers for the
    proposed state.  Returns ``(ri, model, status)``.

    The sticks of the incoming model are proposed from their prior given its
    concentration, and the outgoing sticks are scored under the same density,
    so the stick terms cancel between target and proposal.  They are left out
    of the ratio: for tiny concentrations they are huge and would otherwise
    swamp the remaining terms in floating point.
    """
    if model == 0:
        ri = sweep_indep(x, mu, S, vI, wI, dI, gI, ri, rgrid, a, b, df, wsc1,
                         tau)
    else:
        ri, status = sweep_joint(x, mu, S, vJ, wJ, dJ, gJ, ri, rgrid, a, b,
                                 df, wscj, tau)
        if status != OK:
            return ri, model, status
    r = rgrid[ri]
    if np.random.random() >= 0.5:
        return ri, model, OK
    if model == 0:
        counts[0] += 1
        lq_f, lq_r = propose_i_to_j(x, mu, S, vI, wI, dI, gI, r, tau,
                                    S_p, vJ_p, wJ_p, dJ_p, gJ_p, False)
        cur = (tau * log_lik_indep(x, mu, S, gI, r)
               + log_prior_indep(mu, S, vI, wI, dI, gI, ri, rgrid, a, b, df,
                                 wsc1, False))
        new = (tau * log_lik_joint(x, mu, S_p, gJ_p, r)
               + log_prior_joint(mu, S_p, vJ_p, wJ_p, dJ_p, gJ_p, ri, rgrid,
                                 a, b, df, wscj, False))
        if math.log(np.random.random()) < new + lq_r - cur - lq_f:
            counts[1] += 1
            model = 1
            S[:, :] = S_p
            vJ[:] = vJ_p
            wJ[:] = wJ_p
            dJ[0] = dJ_p[0]
            gJ[:] = gJ_p
    else:
        counts[2] += 1
        lq_f, lq_r = propose_j_to_i(x, mu, S, vJ, wJ, dJ, gJ, r, tau,
                                    S_p, vI_p, wI_p, dI_p, gI_p, False)
        cur = (tau * log_lik_joint(x, mu, S, gJ, r)
               + log_prior_joint(mu, S, vJ, wJ, dJ, gJ, ri, rgrid, a, b, df,
                                 wscj, False))
        new = (tau * log_lik_indep(x, mu, S_p, gI_p, r)
               + log_prior_indep(mu, S_p, vI_p, wI_p, dI_p, gI_p, ri, rgrid,
                                 a, b, df, wsc1, False))
        if math.log(np.random.random()) < new + lq_r - cur - lq_f:
            counts[3] += 1
            model = 0
            S[:, :] = S_p
            vI[:, :] = vI_p
            wI[:, :] = wI_p
            dI[:] = dI_p
            gI[:, :] = gI_p
    return ri, model, OK


@_jit
def run_chain(x, mu, S, vI, wI, dI, gI, vJ, wJ, dJ, gJ, ri, model, rgrid, a,
              b, df, wsc1, wscj, iterations, burn_in, tau):
    """Steps 1-3 of the model-indicator sampler, continuing from the given
    state (updated in place).

    Returns ``(models, loglik, counts, status, ri, model)`` where ``models``
    holds the post-burn-in indicator (0 = independent, 1 = joint) and
    ``counts`` is ``[proposed I->J, accepted I->J, proposed J->I, accepted
    J->I]``.
    """
    n = x.shape[0]
    k = mu.shape[0]
    S_p = np.zeros((2, 2))
    vI_p = np.empty((2, k))
    wI_p = np.empty((2, k))
    dI_p = np.empty(2)
    gI_p = np.zeros((2, n), dtype=np.int64)
    vJ_p = np.empty(k)
    wJ_p = np.empty(k)
    dJ_p = np.empty(1)
    gJ_p = np.zeros(n, dtype=np.int64)
    n_keep = iterations - burn_in
    models = np.empty(n_keep, dtype=np.int8)
    loglik = np.empty(n_keep)
    counts = np.zeros(4, dtype=np.int64)
    for it in range(iterations):
        ri, model, status = rj_step(x, mu, S, vI, wI, dI, gI, vJ, wJ, dJ, gJ,
                                    ri, model, rgrid, a, b, df, wsc1, wscj,
                                    tau, S_p, vI_p, wI_p, dI_p, gI_p, vJ_p,
                                    wJ_p, dJ_p, gJ_p, counts)
        if status != OK:
            return models, loglik, counts, status, ri, model
        if it >= burn_in:
            r = rgrid[ri]
            models[it - burn_in] = model
            if model == 0:
                loglik[it - burn_in] = log_lik_indep(x, mu, S, gI, r)
            else:
                loglik[it - burn_in] = log_lik_joint(x, mu, S, gJ, r)
    return models, loglik, counts, OK, ri, model


# ---------------------------------------------------------------------------
# validation: prior draws vs successive conditionals
# ---------------------------------------------------------------------------

@_jit
def simulate_indep(x, mu, S, gI, r):
    for j in range(2):
        sd = math.sqrt(r * S[j, j])
        for i in range(x.shape[0]):
            x[i, j] = mu[gI[j, i], j] + sd * np.random.normal()


@_jit
def simulate_joint(x, mu, S, gJ, r):
    sd0 = math.sqrt(r * S[0, 0])
    sd1 = math.sqrt(r * S[1, 1])
    for i in range(x.shape[0]):
        x[i, 0] = mu[gJ[i], 0] + sd0 * np.random.normal()
        x[i, 1] = mu[gJ[i], 1] + sd1 * np.random.normal()


@_jit
def _summary(out, mu, S, d, g, r, model):
    out[0] = r
    out[1] = S[0, 0]
    out[2] = S[1, 1]
    out[3] = S[0, 1]
    out[4] = d
    out[5] = mu[0, 0]
    out[6] = mu[0, 1]
    occ = np.zeros(mu.shape[0])
    for i in range(g.shape[0]):
        occ[g[i]] = 1.0
    out[7] = occ.sum()
    out[8] = model


N_SUMMARY = 9


@_jit
def geweke(n, k, draws, steps, mode, rgrid, a, b, df, wsc1, wscj):
    """Prior draws vs successive-conditional draws of ``(theta, data)``.

    Each successive-conditional draw starts from the prior, then alternates
    ``steps`` times between a parameter update given the data and data
    simulation given the parameters.  ``mode`` selects the update: 0 the
    independent sweep, 1 the joint sweep, 2 the full model-switching step
    (starting model drawn with probability 1/2).  Both outputs are
    ``draws x N_SUMMARY`` arrays of ``(r, S11, S22, S12, d, mu_11, mu_12,
    occupied, model)``; for the independent model ``d`` and ``occupied`` refer
    to group 1.
    """
    prior = np.empty((draws, N_SUMMARY))
    succ = np.empty((draws, N_SUMMARY))
    x = np.empty((n, 2))
    mu = np.zeros((k, 2))
    S = np.zeros((2, 2))
    vI = np.empty((2, k))
    wI = np.empty((2, k))
    dI = np.empty(2)
    gI = np.zeros((2, n), dtype=np.int64)
    vJ = np.empty(k)
    wJ = np.empty(k)
    dJ = np.empty(1)
    gJ = np.zeros(n, dtype=np.int64)
    S_p = np.zeros((2, 2))
    vI_p = np.empty((2, k))
    wI_p = np.empty((2, k))
    dI_p = np.empty(2)
    gI_p = np.zeros((2, n), dtype=np.int64)
    vJ_p = np.empty(k)
    wJ_p = np.empty(k)
    dJ_p = np.empty(1)
    gJ_p = np.zeros(n, dtype=np.int64)
    counts = np.zeros(4, dtype=np.int64)
    for t in range(2 * draws):
        if mode == 2:
            model = 0 if np.random.random() < 0.5 else 1
        else:
            model = mode
        if model == 0:
            ri = draw_prior_indep(n, mu, S, vI, wI, dI, gI, rgrid, a, b, df,
                                  wsc1)
        else:
            ri = draw_prior_joint(n, mu, S, vJ, wJ, dJ, gJ, rgrid, a, b, df,
                                  wscj)
        # the inactive block is not part of the target: any valid value works
        if mode == 2:
            if model == 0:
                wJ[:] = 1.0 / k
                vJ[:] = LOG_HALF
                dJ[0] = 1.0
            else:
                wI[:, :] = 1.0 / k
                vI[:, :] = LOG_HALF
                dI[:] = 1.0
        if t < draws:
            if model == 0:
                _summary(prior[t], mu, S, dI[0], gI[0], rgrid[ri], model)
            else:
                _summary(prior[t], mu, S, dJ[0], gJ, rgrid[ri], model)
            continue
        for s in range(steps):
            if model == 0:
                simulate_indep(x, mu, S, gI, rgrid[ri])
            else:
                simulate_joint(x, mu, S, gJ, rgrid[ri])
            if mode == 0:
                ri = sweep_indep(x, mu, S, vI, wI, dI, gI, ri, rgrid, a, b,
                                 df, wsc1, 1.0)
            elif mode == 1:
                ri, _ = sweep_joint(x, mu, S, vJ, wJ, dJ, gJ, ri, rgrid, a, b,
                                    df, wscj, 1.0)
            else:
                ri, model, _ = rj_step(x, mu, S, vI, wI, dI, gI, vJ, wJ, dJ,
                                       gJ, ri, model, rgrid, a, b, df, wsc1,
                                       wscj, 1.0, S_p, vI_p, wI_p, dI_p, gI_p,
                                       vJ_p, wJ_p, dJ_p, gJ_p, counts)
        if model == 0:
            _summary(succ[t - draws], mu, S, dI[0], gI[0], rgrid[ri], model)
        else:
            _summary(succ[t - draws], mu, S, dJ[0], gJ, rgrid[ri], model)
    return prior, succ

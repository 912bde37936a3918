"""Compiled numerical kernels.

Every closed-form conditional used by the samplers lives here exactly once.
The public functions in :mod:`uner.model` and :mod:`uner.samplers` are thin
wrappers that unpack domain objects and call these kernels, and the sweep
loop calls the same kernels, so the block tests exercise the code the chains
run.

Generators passed in are ``numpy.random.Generator`` instances; numba shares
their state with the Python object.
"""

import numpy as np
from numba import njit

UNER = 0
NER = 1

OK = 0
SINGULAR_BETA = 1
DEGENERATE_TAU2 = 2
DEGENERATE_SIGMA2 = 3

TAU2_RATE_FLOOR = 1e-300
_CHOL_RTOL = 1e-12

_jit = njit(cache=True, nogil=True)


@_jit
def expit(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@_jit
def log_odds_u(n, resid, sigma2, tau2, p):
    """Posterior log-odds of a nonzero random effect for one area."""
    d = sigma2 + n * tau2
    return (
        np.log(p)
        - np.log1p(-p)
        - 0.5 * np.log1p(n * tau2 / sigma2)
        + n * n * tau2 * resid * resid / (2.0 * sigma2 * d)
    )


@_jit
def prob_u(n, resid, sigma2, tau2, p):
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    return expit(log_odds_u(n, resid, sigma2, tau2, p))


@_jit
def var_mu(n, resid, sigma2, tau2, ptilde):
    d = sigma2 + n * tau2
    k = n * tau2 / d
    return k * k * resid * resid * ptilde * (1.0 - ptilde) + sigma2 * tau2 * ptilde / d


@_jit
def area_residuals(ybar, xbar, beta, out):
    m, q = xbar.shape
    for i in range(m):
        s = ybar[i]
        for k in range(q):
            s -= xbar[i, k] * beta[k]
        out[i] = s


@_jit
def v_moments(u, ni, resid, sigma2, tau2, mean, var):
    for i in range(ni.shape[0]):
        if u[i] == 1:
            d = sigma2 + ni[i] * tau2
            mean[i] = ni[i] * tau2 * resid[i] / d
            var[i] = sigma2 * tau2 / d
        else:
            mean[i] = 0.0
            var[i] = 0.0


@_jit
def sample_v(rng, u, ni, resid, sigma2, tau2, out):
    for i in range(ni.shape[0]):
        if u[i] == 1:
            d = sigma2 + ni[i] * tau2
            out[i] = ni[i] * tau2 * resid[i] / d + np.sqrt(sigma2 * tau2 / d) * rng.standard_normal()
        else:
            out[i] = 0.0


@_jit
def sample_u(rng, ni, resid, sigma2, tau2, p, out):
    for i in range(ni.shape[0]):
        pt = prob_u(ni[i], resid[i], sigma2, tau2, p)
        out[i] = 1 if rng.random() < pt else 0


@_jit
def beta_system(u, ni, S, ysum, XtX, Xty, sigma2, tau2, prior_prec):
    """Precision matrix and linear term of the beta conditional, collapsed over v.

    Each block (sigma2 I + c J)^-1 = (I - c/(sigma2 + n c) J) / sigma2, so
    X' Sigma^-1 X = X'X / sigma2 - sum_i w_i s_i s_i' with s_i the column sums
    of X_i and w_i = c_i / (sigma2 (sigma2 + n_i c_i)).
    """
    m, q = S.shape
    A = XtX / sigma2
    b = Xty / sigma2
    for i in range(m):
        if u[i] == 1:
            c = tau2
            w = c / (sigma2 * (sigma2 + ni[i] * c))
            for j in range(q):
                b[j] -= w * S[i, j] * ysum[i]
                for k in range(q):
                    A[j, k] -= w * S[i, j] * S[i, k]
    for j in range(q):
        A[j, j] += prior_prec
    return A, b


@_jit
def cholesky(A):
    q = A.shape[0]
    L = np.zeros((q, q))
    scale = 0.0
    for j in range(q):
        scale = max(scale, abs(A[j, j]))
    for j in range(q):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > _CHOL_RTOL * scale:
            return L, False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, q):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    return L, True


@_jit
def forward_sub(L, b):
    q = L.shape[0]
    x = np.empty(q)
    for i in range(q):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    return x


@_jit
def backward_sub_t(L, b):
    """Solve L' x = b."""
    q = L.shape[0]
    x = np.empty(q)
    for i in range(q - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, q):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@_jit
def sample_beta(rng, u, ni, S, ysum, XtX, Xty, sigma2, tau2, prior_prec, out):
    A, b = beta_system(u, ni, S, ysum, XtX, Xty, sigma2, tau2, prior_prec)
    L, ok = cholesky(A)
    if not ok:
        return False
    mean = backward_sub_t(L, forward_sub(L, b))
    q = b.shape[0]
    z = np.empty(q)
    for k in range(q):
        z[k] = rng.standard_normal()
    dev = backward_sub_t(L, z)
    for k in range(q):
        out[k] = mean[k] + dev[k]
    return True


@_jit
def tau2_params(u, v, a, b1, b2, model):
    """Shape and rate of the inverse-gamma conditional of tau2."""
    m = u.shape[0]
    z = 0
    ss = 0.0
    for i in range(m):
        if u[i] == 1:
            z += 1
            ss += v[i] * v[i]
    if model == NER:
        return 0.5 * (m - 1), 0.5 * ss
    if z > a:
        return 0.5 * (z - 1), 0.5 * ss
    return 0.5 * z + b1, 0.5 * ss + b2


@_jit
def tau2_degenerate(u, a, model, rate):
    if model == NER:
        return rate < TAU2_RATE_FLOOR
    z = 0
    for i in range(u.shape[0]):
        z += u[i]
    return z > a and rate < TAU2_RATE_FLOOR


@_jit
def residual_ss(v, beta, y, X, idx):
    N, q = X.shape
    rss = 0.0
    for j in range(N):
        r = y[j] - v[idx[j]]
        for k in range(q):
            r -= X[j, k] * beta[k]
        rss += r * r
    return rss


@_jit
def sigma2_params(v, beta, y, X, idx, a0, b0):
    """Inverse-gamma conditional of sigma2 under an IG(a0, b0) prior.

    The objective prior 1/sigma corresponds to a0 = -1/2, b0 = 0.
    """
    rss = residual_ss(v, beta, y, X, idx)
    return a0 + 0.5 * y.shape[0], b0 + 0.5 * rss


@_jit
def inv_gamma(rng, shape, rate):
    return rate / rng.gamma(shape, 1.0)


@_jit
def ybar_r_moments(xr_beta, n, resid, sigma2, tau2, ui, n_r):
    """Conditional mean and variance of the mean of the unsampled units."""
    if ui == 1:
        d = sigma2 + n * tau2
        return xr_beta + n * tau2 * resid / d, sigma2 * tau2 / d + sigma2 / n_r
    return xr_beta, sigma2 / n_r


@_jit
def run_sweeps(
    rng, model, n_iter, burnin, thin, freeze_u,
    ni, ybar, xbar, S, ysum, XtX, Xty, y, X, idx,
    a, b1, b2, prior_prec, s2_a0, s2_b0,
    fp_active, xbar_r, n_r,
    beta, scal, u, v,
    out_beta, out_scal, out_u, out_v, out_ybar_r,
):
    """Run ``n_iter`` sweeps, updating the state in place.

    ``scal`` holds (sigma2, tau2, p). Sweep order for UNER is
    u -> p -> beta -> v -> tau2 -> sigma2; NER skips u and p. Because beta is
    drawn with v integrated out, v is redrawn right after beta and before any
    v-conditioned block. Returns (status, sweep index of failure).
    """
    m, q = xbar.shape
    resid = np.empty(m)
    keep = 0
    for it in range(n_iter):
        sigma2 = scal[0]
        tau2 = scal[1]
        p = scal[2]
        if model == UNER:
            if not freeze_u:
                area_residuals(ybar, xbar, beta, resid)
                sample_u(rng, ni, resid, sigma2, tau2, p, u)
            z = 0
            for i in range(m):
                z += u[i]
            p = rng.beta(z + 0.5, m - z + 0.5)
            scal[2] = p
        if not sample_beta(rng, u, ni, S, ysum, XtX, Xty, sigma2, tau2, prior_prec, beta):
            return SINGULAR_BETA, it
        area_residuals(ybar, xbar, beta, resid)
        sample_v(rng, u, ni, resid, sigma2, tau2, v)
        shape, rate = tau2_params(u, v, a, b1, b2, model)
        if tau2_degenerate(u, a, model, rate):
            sample_v(rng, u, ni, resid, sigma2, tau2, v)
            shape, rate = tau2_params(u, v, a, b1, b2, model)
            if tau2_degenerate(u, a, model, rate):
                return DEGENERATE_TAU2, it
        tau2 = inv_gamma(rng, shape, rate)
        scal[1] = tau2
        shape, rate = sigma2_params(v, beta, y, X, idx, s2_a0, s2_b0)
        if not rate > 0.0:
            return DEGENERATE_SIGMA2, it
        sigma2 = inv_gamma(rng, shape, rate)
        scal[0] = sigma2

        if it >= burnin and (it - burnin + 1) % thin == 0 and keep < out_scal.shape[0]:
            for k in range(q):
                out_beta[keep, k] = beta[k]
            out_scal[keep, 0] = sigma2
            out_scal[keep, 1] = tau2
            out_scal[keep, 2] = p
            for i in range(m):
                out_u[keep, i] = u[i]
                out_v[keep, i] = v[i]
            if out_ybar_r.shape[0] > 0:
                area_residuals(ybar, xbar, beta, resid)
                for i in range(m):
                    if fp_active[i]:
                        xb = 0.0
                        for k in range(q):
                            xb += xbar_r[i, k] * beta[k]
                        mu, var = ybar_r_moments(xb, ni[i], resid[i], sigma2, tau2, u[i], n_r[i])
                        out_ybar_r[keep, i] = mu + np.sqrt(var) * rng.standard_normal()
                    else:
                        out_ybar_r[keep, i] = np.nan
            keep += 1
    return OK, -1

"""Independent oracles used by the unit and acceptance tests.

Everything here is deliberately implemented from first principles
(quadrature, grid search, enumeration, generic MCMC) so it shares no code
path with the implementations it checks.
"""

import itertools
import math

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln


# ---------------------------------------------------------------------------
# Conjugate predictive densities by numeric quadrature


def bernoulli_predictive_quad(count, ones_d, a, b, x_d):
    """log integral of theta^x (1-theta)^(1-x) against the Beta posterior."""
    a_post = a + ones_d
    b_post = b + count - ones_d
    lognorm = gammaln(a_post) + gammaln(b_post) - gammaln(a_post + b_post)

    def integrand(theta):
        return (
            theta**x_d
            * (1 - theta) ** (1 - x_d)
            * theta ** (a_post - 1)
            * (1 - theta) ** (b_post - 1)
        )

    val, _ = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10)
    return math.log(val) - lognorm


def invgamma_logpdf(v, shape, rate):
    return shape * math.log(rate) - gammaln(shape) - (shape + 1) * math.log(v) - rate / v


def gaussian_predictive_quad(n, s1, s2, mu0, kappa0, a0, b0, x):
    """One-dimensional NIG predictive by quadrature over the variance.

    The mean is integrated out analytically (Gaussian convolution), the
    variance numerically against its InvGamma posterior.
    """
    kappa_n = kappa0 + n
    a_n = a0 + n / 2.0
    if n > 0:
        xbar = s1 / n
        ss = max(s2 - s1 * s1 / n, 0.0)
        mu_n = (kappa0 * mu0 + s1) / kappa_n
        b_n = b0 + 0.5 * ss + kappa0 * n * (xbar - mu0) ** 2 / (2 * kappa_n)
    else:
        mu_n = mu0
        b_n = b0

    def integrand(u):  # v = exp(u) substitution handles the heavy tail
        v = math.exp(u)
        var_eff = v * (1.0 + 1.0 / kappa_n)
        gauss = math.exp(-((x - mu_n) ** 2) / (2 * var_eff)) / math.sqrt(
            2 * math.pi * var_eff
        )
        return gauss * math.exp(invgamma_logpdf(v, a_n, b_n)) * v

    v_scale = b_n / max(a_n, 0.5)
    lo = math.log(v_scale) - 40.0
    hi = math.log(v_scale) + 40.0
    val, _ = quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-11, limit=400)
    return math.log(val)


def zero_gaussian_predictive_quad(count, sumsq_d, aT, bT_d, rho_d):
    """Zero-mean Gaussian predictive by quadrature over the variance."""
    a_n = aT + count / 2.0
    b_n = bT_d + sumsq_d / 2.0

    def integrand(u):
        v = math.exp(u)
        gauss = math.exp(-(rho_d**2) / (2 * v)) / math.sqrt(2 * math.pi * v)
        return gauss * math.exp(invgamma_logpdf(v, a_n, b_n)) * v

    v_scale = b_n / max(a_n, 0.5)
    lo = math.log(v_scale) - 40.0
    hi = math.log(v_scale) + 40.0
    val, _ = quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-11, limit=400)
    return math.log(val)


# ---------------------------------------------------------------------------
# Posterior-mode grid searches


def beta_mode_grid(a_post, b_post, grid=200001):
    thetas = np.linspace(1e-9, 1 - 1e-9, grid)
    logpdf = (a_post - 1) * np.log(thetas) + (b_post - 1) * np.log1p(-thetas)
    return float(thetas[np.argmax(logpdf)])


def invgamma_mode_grid(shape, rate, grid=200001):
    hi = 10.0 * rate / max(shape - 1, 0.25)
    vs = np.linspace(1e-9, hi, grid)
    logpdf = -(shape + 1) * np.log(vs) - rate / vs
    return float(vs[np.argmax(logpdf)])


def nig_mode_grid(mu_n, kappa_n, a_n, b_n, grid=801):
    """Joint (mu, var) maximizer of the NIG posterior density on a grid."""
    sd = math.sqrt(b_n / (a_n * kappa_n))
    mus = np.linspace(mu_n - 6 * sd, mu_n + 6 * sd, grid)
    vs = np.linspace(1e-6, 10 * b_n / max(a_n, 0.5), grid)
    mm, vv = np.meshgrid(mus, vs)
    logpdf = -(a_n + 1.5) * np.log(vv) - (2 * b_n + kappa_n * (mm - mu_n) ** 2) / (
        2 * vv
    )
    j = np.unravel_index(np.argmax(logpdf), logpdf.shape)
    return float(mm[j]), float(vv[j])


# ---------------------------------------------------------------------------
# Concentration posterior


def gamma_posterior_logpdf(g, k, n, g_a, g_b):
    if g <= 0:
        return -np.inf
    return (
        (g_a - 1) * math.log(g)
        - g_b * g
        + k * math.log(g)
        + gammaln(g)
        - gammaln(g + n)
    )


def slice_sample_gamma(k, n, g_a, g_b, n_samples, seed, x0=1.0, width=1.0):
    """Stepping-out slice sampler targeting p(gamma | K, N)."""
    rng = np.random.default_rng(seed)
    x = x0
    out = np.empty(n_samples)
    logf = lambda g: gamma_posterior_logpdf(g, k, n, g_a, g_b)
    for t in range(n_samples):
        logy = logf(x) + math.log(rng.random())
        lo = x - width * rng.random()
        hi = lo + width
        while lo > 0 and logf(lo) > logy:
            lo -= width
        while logf(hi) > logy:
            hi += width
        lo = max(lo, 0.0)
        while True:
            cand = rng.uniform(lo, hi)
            if logf(cand) > logy:
                x = cand
                break
            if cand < x:
                lo = cand
            else:
                hi = cand
        out[t] = x
    return out


def gamma_posterior_mean_quad(k, n, g_a, g_b):
    """Deterministic posterior mean by dense-grid integration."""
    gs = np.linspace(1e-8, 80.0, 400001)
    logp = (
        (g_a - 1) * np.log(gs)
        - g_b * gs
        + k * np.log(gs)
        + gammaln(gs)
        - gammaln(gs + n)
    )
    w = np.exp(logp - logp.max())
    return float(np.sum(gs * w) / np.sum(w))


# ---------------------------------------------------------------------------
# Exact DP-mixture partition posterior by enumeration


def partitions(n):
    """All set partitions of range(n) as restricted-growth label tuples."""
    def rec(prefix, maxlabel):
        i = len(prefix)
        if i == n:
            yield tuple(prefix)
            return
        for lab in range(maxlabel + 2):
            prefix.append(lab)
            yield from rec(prefix, max(maxlabel, lab))
            prefix.pop()

    yield from rec([], -1)


def canonical_labels(z):
    """Relabel an assignment vector to restricted-growth form."""
    mapping = {}
    out = []
    for zi in z:
        if zi not in mapping:
            mapping[zi] = len(mapping)
        out.append(mapping[zi])
    return tuple(out)


def exact_partition_posterior(items, gamma, marginal_loglik):
    """Posterior over partitions: CRP prior x product of block marginals.

    ``marginal_loglik(block_items)`` must return the log marginal
    likelihood of one block's items under the component prior.
    """
    items = np.asarray(items, dtype=float)
    n = items.shape[0]
    logps = {}
    for part in partitions(n):
        k = max(part) + 1
        blocks = [[i for i in range(n) if part[i] == b] for b in range(k)]
        logp = k * math.log(gamma) + sum(gammaln(len(b)) for b in blocks)
        logp += sum(marginal_loglik(items[b]) for b in blocks)
        logps[part] = logp
    mx = max(logps.values())
    total = sum(math.exp(v - mx) for v in logps.values())
    return {key: math.exp(v - mx) / total for key, v in logps.items()}


def total_variation(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# Misc


def rand_index_brute(pred, truth):
    n = len(pred)
    agree = 0
    pairs = 0
    for i, j in itertools.combinations(range(n), 2):
        pairs += 1
        agree += (pred[i] == pred[j]) == (truth[i] == truth[j])
    return agree / pairs


def golden_test_quadratic(center):
    """1-D concave objective with a known unique maximizer."""
    return lambda rho: -((rho[0] - center) ** 2)

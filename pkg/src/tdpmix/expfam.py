"""Conjugate exponential-family sufficient statistics.

Three families carry the whole model. Beta-Bernoulli (one Beta per pixel,
shared prior) models binary-ish images, Normal-Inverse-Gamma diagonal
Gaussians model curves and 2D points, and a zero-mean Gaussian with an
Inverse-Gamma prior on each variance models transformation parameters.

Each stats object caches the sufficient statistics of the items currently
assigned to it, supports O(1) signed add/remove, and exposes the collapsed
posterior predictive log-density and the posterior mode. Predictive
constants are cached lazily and invalidated by a version counter, so
repeated scoring against a fixed set of statistics costs one pass over the
item vector.
"""

import numpy as np
from scipy.special import gammaln

__all__ = [
    "BernoulliStats",
    "DiagGaussianStats",
    "TransformPriorStats",
    "bernoulli_loglik",
    "gaussian_loglik",
    "zero_mean_gaussian_loglik",
    "stats_allclose",
]

MODE_EPS = 1e-6


def _check_item(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"item has shape {x.shape}, expected ({dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("item contains non-finite values")
    return x


def _student_t_logpdf(z2_over_nu, nu, log_scale):
    """Sum of per-dimension Student-t log densities.

    ``z2_over_nu`` is ((x - loc)/scale)^2 / nu per dimension; ``log_scale``
    is the per-dimension log of the scale (vector or scalar).
    """
    const = (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu * np.pi)
    )
    return np.sum(const - log_scale - (nu + 1.0) / 2.0 * np.log1p(z2_over_nu))


def bernoulli_loglik(x, probs):
    """Log-likelihood of a [0,1]-valued vector under fixed pixel probabilities."""
    return float(np.dot(x, np.log(probs)) + np.dot(1.0 - x, np.log1p(-probs)))


def gaussian_loglik(x, mean, var):
    """Log-likelihood of x under an independent Gaussian per dimension."""
    d = (x - mean)
    return float(np.sum(-0.5 * np.log(2.0 * np.pi * var) - d * d / (2.0 * var)))


def zero_mean_gaussian_loglik(rho, var):
    """Log-likelihood of rho under a zero-mean Gaussian with given variances."""
    if len(rho) == 0:
        return 0.0
    return float(np.sum(-0.5 * np.log(2.0 * np.pi * var) - rho * rho / (2.0 * var)))


class BernoulliStats:
    """Beta-Bernoulli statistics, one Bernoulli per dimension, shared Beta(a, b).

    Pixels in [0, 1] are treated as soft observations: an item contributes
    its values to ``ones`` and 1 to ``count``. The collapsed predictive
    probability of a 1 in dimension d is (ones_d + a) / (count + a + b); a
    soft item x scores sum_d x_d log p_d + (1 - x_d) log(1 - p_d), which
    reduces to the exact Polya urn predictive for binary items.
    """

    kind = "bernoulli"

    def __init__(self, dim, a=1.0, b=1.0):
        if a <= 0 or b <= 0:
            raise ValueError("Beta prior parameters must be positive")
        self.dim = int(dim)
        self.a = float(a)
        self.b = float(b)
        self.count = 0
        self.ones = np.zeros(self.dim)
        self._version = 0
        self._cache_version = -1
        self._log_p = None
        self._log_1mp = None

    def update(self, x, sign):
        """Add (sign=+1) or remove (sign=-1) one item's contribution."""
        x = _check_item(x, self.dim)
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
            raise ValueError("Bernoulli items must lie in [0, 1]")
        if sign < 0 and self.count <= 0:
            raise ValueError("cannot remove from empty statistics")
        self.count += sign
        self.ones += sign * np.clip(x, 0.0, 1.0)
        self._version += 1

    def add(self, x):
        self.update(x, 1)

    def remove(self, x):
        self.update(x, -1)

    def _refresh(self):
        if self._cache_version != self._version:
            p = (self.ones + self.a) / (self.count + self.a + self.b)
            self._log_p = np.log(p)
            self._log_1mp = np.log1p(-p)
            self._cache_version = self._version

    def logpredictive(self, x):
        """Collapsed posterior predictive log-density of one item."""
        x = _check_item(x, self.dim)
        self._refresh()
        return float(np.dot(x, self._log_p) + np.dot(1.0 - x, self._log_1mp))

    def mode(self):
        """Posterior-mode probability per dimension, clamped to (0, 1).

        The Beta(ones + a, count - ones + b) mode is
        (ones + a - 1) / (count + a + b - 2); when that is undefined
        (denominator <= 0) the posterior mean is used instead, and values
        are clamped away from {0, 1} so downstream log-likelihoods stay
        finite.
        """
        denom = self.count + self.a + self.b - 2.0
        if denom > 0:
            m = (self.ones + self.a - 1.0) / denom
        else:
            m = (self.ones + self.a) / (self.count + self.a + self.b)
        return np.clip(m, MODE_EPS, 1.0 - MODE_EPS)

    def loglik_at(self, x, mode):
        return bernoulli_loglik(x, mode)

    def copy(self):
        out = BernoulliStats(self.dim, self.a, self.b)
        out.count = self.count
        out.ones = self.ones.copy()
        return out


class DiagGaussianStats:
    """Diagonal Gaussian with a Normal-Inverse-Gamma prior per dimension.

    The prior on each dimension d is mu_d ~ N(mu0_d, sigma_d^2 / kappa0)
    and sigma_d^2 ~ InvGamma(a0, b0); kappa0, a0, b0 are shared across
    dimensions. Accumulates count, per-dimension sum and sum of squares.

    Posterior (per dimension, n items, mean xbar):
        kappa_n = kappa0 + n
        mu_n    = (kappa0 mu0 + n xbar) / kappa_n
        a_n     = a0 + n / 2
        b_n     = b0 + (sumsq - sum^2/n)/2 + kappa0 n (xbar - mu0)^2 / (2 kappa_n)

    Predictive: Student-t with 2 a_n degrees of freedom, location mu_n and
    scale sqrt(b_n (kappa_n + 1) / (a_n kappa_n)). The joint posterior mode
    is (mu_n, b_n / (a_n + 3/2)).
    """

    kind = "gaussian"

    def __init__(self, dim, mu0=0.0, kappa0=0.01, a0=1.0, b0=0.1):
        if kappa0 <= 0 or a0 <= 0 or b0 <= 0:
            raise ValueError("kappa0, a0, b0 must be positive")
        self.dim = int(dim)
        self.mu0 = np.broadcast_to(np.asarray(mu0, dtype=float), (self.dim,)).copy()
        self.kappa0 = float(kappa0)
        self.a0 = float(a0)
        self.b0 = float(b0)
        self.count = 0
        self.sum = np.zeros(self.dim)
        self.sumsq = np.zeros(self.dim)
        self._version = 0
        self._cache_version = -1
        self._pred = None

    def update(self, x, sign):
        x = _check_item(x, self.dim)
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if sign < 0 and self.count <= 0:
            raise ValueError("cannot remove from empty statistics")
        self.count += sign
        self.sum += sign * x
        self.sumsq += sign * x * x
        self._version += 1

    def add(self, x):
        self.update(x, 1)

    def remove(self, x):
        self.update(x, -1)

    def posterior(self):
        """Return (kappa_n, mu_n, a_n, b_n) of the per-dimension posterior."""
        n = self.count
        kappa_n = self.kappa0 + n
        a_n = self.a0 + n / 2.0
        if n > 0:
            xbar = self.sum / n
            ss = np.maximum(self.sumsq - self.sum * self.sum / n, 0.0)
            mu_n = (self.kappa0 * self.mu0 + self.sum) / kappa_n
            b_n = (
                self.b0
                + 0.5 * ss
                + self.kappa0 * n * (xbar - self.mu0) ** 2 / (2.0 * kappa_n)
            )
        else:
            mu_n = self.mu0.copy()
            b_n = np.full(self.dim, self.b0)
        return kappa_n, mu_n, a_n, b_n

    def _refresh(self):
        if self._cache_version != self._version:
            kappa_n, mu_n, a_n, b_n = self.posterior()
            nu = 2.0 * a_n
            scale2 = b_n * (kappa_n + 1.0) / (a_n * kappa_n)
            self._pred = (mu_n, nu, scale2, 0.5 * np.log(scale2))
            self._cache_version = self._version

    def logpredictive(self, x):
        """Collapsed Student-t predictive log-density, summed over dimensions."""
        x = _check_item(x, self.dim)
        self._refresh()
        mu_n, nu, scale2, log_scale = self._pred
        d = x - mu_n
        return float(_student_t_logpdf(d * d / (scale2 * nu), nu, log_scale))

    def mode(self):
        """Joint posterior mode: (mean vector, variance vector)."""
        _, mu_n, a_n, b_n = self.posterior()
        return mu_n, b_n / (a_n + 1.5)

    def loglik_at(self, x, mode):
        mean, var = mode
        return gaussian_loglik(x, mean, var)

    def copy(self):
        out = DiagGaussianStats(self.dim, self.mu0, self.kappa0, self.a0, self.b0)
        out.count = self.count
        out.sum = self.sum.copy()
        out.sumsq = self.sumsq.copy()
        return out


class TransformPriorStats:
    """Zero-mean Gaussian per dimension with InvGamma(aT, bT) on each variance.

    Only the count and per-dimension sum of squares are needed. Posterior
    over variance d is InvGamma(aT + count/2, bT_d + sumsq_d/2); the
    predictive is a zero-location Student-t and the variance mode is
    (bT_d + sumsq_d/2) / (aT + count/2 + 1). ``bT`` may be a scalar or a
    per-dimension vector. A zero-dimensional instance (identity transform
    family) scores every item at 0.
    """

    kind = "transform_prior"

    def __init__(self, dim, aT=2.0, bT=1.0):
        self.dim = int(dim)
        if aT <= 0:
            raise ValueError("aT must be positive")
        self.aT = float(aT)
        self.bT = np.broadcast_to(np.asarray(bT, dtype=float), (self.dim,)).copy()
        if self.dim and np.any(self.bT <= 0):
            raise ValueError("bT must be positive")
        self.count = 0
        self.sumsq = np.zeros(self.dim)
        self._version = 0
        self._cache_version = -1
        self._pred = None

    def update(self, rho, sign):
        rho = _check_item(rho, self.dim)
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if sign < 0 and self.count <= 0:
            raise ValueError("cannot remove from empty statistics")
        self.count += sign
        self.sumsq += sign * rho * rho
        self._version += 1

    def add(self, rho):
        self.update(rho, 1)

    def remove(self, rho):
        self.update(rho, -1)

    def posterior(self):
        """Return (a_n, b_n) of the per-dimension InvGamma posterior."""
        return self.aT + self.count / 2.0, self.bT + 0.5 * self.sumsq

    def _refresh(self):
        if self._cache_version != self._version:
            a_n, b_n = self.posterior()
            nu = 2.0 * a_n
            scale2 = b_n / a_n
            self._pred = (nu, scale2, 0.5 * np.log(scale2) if self.dim else 0.0)
            self._cache_version = self._version

    def logpredictive(self, rho):
        rho = _check_item(rho, self.dim)
        if self.dim == 0:
            return 0.0
        self._refresh()
        nu, scale2, log_scale = self._pred
        return float(_student_t_logpdf(rho * rho / (scale2 * nu), nu, log_scale))

    def mode(self):
        """Posterior-mode variance per dimension."""
        a_n, b_n = self.posterior()
        return b_n / (a_n + 1.0)

    def loglik_at(self, rho, mode):
        return zero_mean_gaussian_loglik(rho, mode)

    def copy(self):
        out = TransformPriorStats(self.dim, self.aT, self.bT)
        out.count = self.count
        out.sumsq = self.sumsq.copy()
        return out


def stats_allclose(s, t, rtol=1e-9, atol=1e-12):
    """Whether two statistics objects of the same family agree."""
    if type(s) is not type(t) or s.dim != t.dim or s.count != t.count:
        return False
    if isinstance(s, BernoulliStats):
        return np.allclose(s.ones, t.ones, rtol=rtol, atol=atol)
    if isinstance(s, DiagGaussianStats):
        return np.allclose(s.sum, t.sum, rtol=rtol, atol=atol) and np.allclose(
            s.sumsq, t.sumsq, rtol=rtol, atol=atol
        )
    if isinstance(s, TransformPriorStats):
        return np.allclose(s.sumsq, t.sumsq, rtol=rtol, atol=atol)
    raise TypeError(f"unsupported statistics type: {type(s)!r}")

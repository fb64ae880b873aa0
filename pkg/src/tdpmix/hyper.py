"""Model hyperparameters and data-driven defaults."""

from dataclasses import dataclass, replace

import numpy as np

from .expfam import BernoulliStats, DiagGaussianStats, TransformPriorStats

__all__ = ["Hyperparams", "make_data_stats", "make_transform_stats"]

BT_FLOOR = 1e-6


@dataclass
class Hyperparams:
    """Priors plus sampler settings; all overridable from config.

    The transform prior's ``bT`` is calibrated from the family's scale
    hints so that the prior variance mode equals 10% of each dimension's
    hint; frozen (zero-hint) dimensions get a small positive floor.
    ``gauss_b0`` defaults to 0.1 x the mean per-dimension data variance.
    """

    data_dist: str = "gaussian"  # "bernoulli" | "gaussian"
    bern_a: float = 1.0
    bern_b: float = 1.0
    gauss_mu0: float = 0.0
    gauss_kappa0: float = 0.01
    gauss_a0: float = 1.0
    gauss_b0: float = 0.1
    t_aT: float = 2.0
    t_bT: np.ndarray | None = None
    gamma_init: float = 1.0
    gamma_prior_a: float = 1.0
    gamma_prior_b: float = 1.0
    iters: int = 30
    L: int = 50
    seed: int = 0
    opt_budget: int | None = None

    @classmethod
    def for_data(cls, items, kind, family, **overrides):
        """Defaults calibrated on the data set and transform family."""
        items = np.asarray(items, dtype=float)
        hp = cls()
        hp.data_dist = "bernoulli" if kind == "images" else "gaussian"
        if items.size:
            var = float(np.mean(np.var(items, axis=0)))
            hp.gauss_b0 = max(0.1 * var, 1e-6)
        hp.t_bT = bt_from_hints(family.hints, hp.t_aT)
        for key, value in overrides.items():
            if not hasattr(hp, key):
                raise ValueError(f"unknown hyperparameter: {key!r}")
            setattr(hp, key, value)
        return hp

    def copy(self, **changes):
        return replace(self, **changes)


def bt_from_hints(hints, aT):
    """bT per dimension so the InvGamma variance mode is 0.1 x hint."""
    hints = np.asarray(hints, dtype=float)
    return np.maximum(0.1 * hints * (aT + 1.0), BT_FLOOR)


def make_data_stats(hp, dim, mu0=None):
    """Fresh (empty) data-distribution statistics per the hyperparameters."""
    if hp.data_dist == "bernoulli":
        return BernoulliStats(dim, hp.bern_a, hp.bern_b)
    if hp.data_dist == "gaussian":
        mu0 = hp.gauss_mu0 if mu0 is None else mu0
        return DiagGaussianStats(dim, mu0, hp.gauss_kappa0, hp.gauss_a0, hp.gauss_b0)
    raise ValueError(f"unknown data distribution: {hp.data_dist!r}")


def make_transform_stats(hp, family):
    """Fresh transform-prior statistics sized to the family."""
    bT = hp.t_bT if hp.t_bT is not None else bt_from_hints(family.hints, hp.t_aT)
    return TransformPriorStats(family.dim, hp.t_aT, bT)

"""Joint alignment and clustering with a Dirichlet-process prior.

Each cluster owns a pair of sufficient statistics: one for its data
distribution and one for its zero-mean transform distribution. Two
samplers update (assignment, transform) per item:

* sampler 1 (blocked): per candidate cluster, maximize the leave-one-out
  collapsed predictive over the transform, then sample the assignment from
  CRP prior x optimized score. Fully Rao-Blackwellized.
* sampler 2 (collapsed transform): draw L transform proposals once per
  item, align the item once per proposal, and reuse the aligned versions
  across every cluster by importance-reweighting against each cluster's
  posterior-mode parameters. The number of data transformations per item
  is exactly L, independent of the number of clusters. The transform for
  the sampled cluster is the proposal with the best mode-likelihood
  (hard-EM E-step); cluster modes refresh as statistics change (M-step).

With the zero-dimensional identity family there is no transform to
integrate, and sampler 2 falls back to the exact collapsed predictive,
i.e. a standard collapsed DP-mixture Gibbs sampler.

Every iteration permutes the item order afresh and resamples the DP
concentration with the auxiliary-variable (Escobar-West) scheme, unless
the concentration is pinned at 0 by semi-supervised seeding.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .ba import optimize_rho
from .expfam import stats_allclose
from .hyper import make_data_stats, make_transform_stats

__all__ = [
    "Cluster",
    "JACState",
    "init_jac",
    "crp_log_prior",
    "sampler1_step",
    "sampler2_step",
    "gibbs_iteration",
    "resample_gamma",
    "seed_clusters",
    "run_jac",
    "joint_score",
    "check_state",
    "importance_marginal_log",
    "mode_loglik_many",
    "UNASSIGNED",
    "FRESH",
]

UNASSIGNED = -1
FRESH = -2

GAMMA_FLOOR = 1e-12


class Cluster:
    """One mixture component: data stats, transform stats, bookkeeping."""

    __slots__ = (
        "id",
        "data_stats",
        "t_stats",
        "members",
        "seed_members",
        "seed_weight",
        "locked",
        "seed_data_stats",
        "seed_t_stats",
        "_theta_cache",
        "_phi_cache",
    )

    def __init__(self, cid, data_stats, t_stats):
        self.id = cid
        self.data_stats = data_stats
        self.t_stats = t_stats
        self.members = 0
        self.seed_members = 0
        self.seed_weight = 0.0
        self.locked = False
        self.seed_data_stats = None
        self.seed_t_stats = None
        self._theta_cache = (-1, None)
        self._phi_cache = (-1, None)

    @property
    def crp_weight(self):
        return self.members + self.seed_weight

    @property
    def n_items(self):
        return self.members + self.seed_members

    def theta_mode(self):
        ver, val = self._theta_cache
        if ver != self.data_stats._version:
            val = self.data_stats.mode()
            self._theta_cache = (self.data_stats._version, val)
        return val

    def phi_mode(self):
        ver, val = self._phi_cache
        if ver != self.t_stats._version:
            val = self.t_stats.mode()
            self._phi_cache = (self.t_stats._version, val)
        return val


@dataclass
class JACState:
    items: np.ndarray
    family: object
    hp: object
    z: np.ndarray
    rho: np.ndarray
    aligned: np.ndarray
    clusters: dict
    gamma: float
    gamma_locked: bool
    fixed: np.ndarray
    rng: np.random.Generator
    prior_data_stats: object
    prior_t_stats: object
    next_id: int = 0
    iteration: int = 0
    transform_calls: int = 0
    trace: list = field(default_factory=list)
    best: tuple = None

    @property
    def n(self):
        return self.items.shape[0]

    @property
    def n_clusters(self):
        return len(self.clusters)

    def live_ids(self):
        return sorted(self.clusters)


def init_jac(items, family, hp, rng, gamma=None, init="single"):
    """Build a state; ``init`` is "single" (everything in one cluster,
    identity transforms) or "unassigned" (items placed by the first
    iteration, as for seeded and warm-started runs)."""
    items = np.asarray(items, dtype=float)
    n, dim = items.shape
    gamma = hp.gamma_init if gamma is None else float(gamma)
    if gamma < 0:
        raise ValueError("concentration must be nonnegative")
    state = JACState(
        items=items,
        family=family,
        hp=hp,
        z=np.full(n, UNASSIGNED, dtype=int),
        rho=np.zeros((n, family.dim)),
        aligned=items.copy(),
        clusters={},
        gamma=gamma,
        gamma_locked=(gamma == 0.0),
        fixed=np.zeros(n, dtype=bool),
        rng=rng,
        prior_data_stats=make_data_stats(hp, dim),
        prior_t_stats=make_transform_stats(hp, family),
    )
    if init == "single" and n > 0:
        c = _new_cluster(state)
        state.clusters[c.id] = c
        for i in range(n):
            state.z[i] = c.id
            c.data_stats.add(state.aligned[i])
            c.t_stats.add(state.rho[i])
            c.members += 1
    elif init not in ("single", "unassigned"):
        raise ValueError(f"unknown init mode: {init!r}")
    return state


def _new_cluster(state):
    c = Cluster(
        state.next_id,
        make_data_stats(state.hp, state.items.shape[1]),
        make_transform_stats(state.hp, state.family),
    )
    state.next_id += 1
    return c


def _remove_item(state, i):
    k = state.z[i]
    if k == UNASSIGNED:
        return
    c = state.clusters[k]
    c.data_stats.remove(state.aligned[i])
    c.t_stats.remove(state.rho[i])
    c.members -= 1
    state.z[i] = UNASSIGNED
    if c.crp_weight <= 0 and not c.locked:
        del state.clusters[k]


def _add_item(state, i, cluster, rho_new, y_new):
    if cluster.id not in state.clusters:
        state.clusters[cluster.id] = cluster
    state.z[i] = cluster.id
    state.rho[i] = rho_new
    state.aligned[i] = y_new
    cluster.data_stats.add(y_new)
    cluster.t_stats.add(rho_new)
    cluster.members += 1


def _total_weight(state):
    return sum(c.crp_weight for c in state.clusters.values())


def crp_log_prior(state, i, cluster_id=None):
    """Chinese-restaurant predictive log-probability for item i.

    Item i must currently be unassigned. ``cluster_id=None`` scores a new
    cluster: log(gamma / (total + gamma)), exactly -inf when gamma is 0.
    """
    if state.z[i] != UNASSIGNED:
        raise ValueError("item must be removed before scoring")
    denom = _total_weight(state) + state.gamma
    if cluster_id is None:
        if state.gamma == 0.0:
            return -np.inf
        return math.log(state.gamma / denom)
    return math.log(state.clusters[cluster_id].crp_weight / denom)


def _crp_log_weights(state):
    """(cluster ids, their CRP log-weights, log-weight of a new cluster)."""
    ids = state.live_ids()
    denom = _total_weight(state) + state.gamma
    logs = np.array(
        [math.log(state.clusters[k].crp_weight / denom) for k in ids]
    )
    log_new = math.log(state.gamma / denom) if state.gamma > 0 else -np.inf
    return ids, logs, log_new


def _sample_categorical(rng, log_scores):
    """Single-uniform inversion draw; RNG use is order-independent."""
    log_scores = np.asarray(log_scores, dtype=float)
    m = np.max(log_scores)
    if not np.isfinite(m):
        raise RuntimeError("all candidate scores are -inf")
    p = np.exp(log_scores - m)
    p /= p.sum()
    j = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(j, p.size - 1)


def sampler1_step(state, i, budget=None):
    """Blocked update: optimize the transform per cluster, then sample."""
    _remove_item(state, i)
    x = state.items[i]
    family = state.family
    ids, crp_logs, crp_new = _crp_log_weights(state)
    budget = state.hp.opt_budget if budget is None else budget

    cands = []
    scores = []
    for k, crp_k in zip(ids, crp_logs):
        c = state.clusters[k]

        def objective(r, c=c):
            if not family.valid_params(r):
                return -np.inf
            y = family.align(x, r)
            return c.t_stats.logpredictive(r) + c.data_stats.logpredictive(y)

        rho_k, s_k = optimize_rho(
            objective, state.rho[i], family, state.rng, budget=budget
        )
        cands.append((c, rho_k))
        scores.append(crp_k + s_k)

    if state.gamma > 0:

        def prior_objective(r):
            if not family.valid_params(r):
                return -np.inf
            y = family.align(x, r)
            return state.prior_t_stats.logpredictive(
                r
            ) + state.prior_data_stats.logpredictive(y)

        half = None if budget is None else max(budget // 2, 1)
        rho_new, s_new = optimize_rho(
            prior_objective, np.zeros(family.dim), family, state.rng, budget=half
        )
        cands.append((None, rho_new))
        scores.append(crp_new + s_new)

    j = _sample_categorical(state.rng, scores)
    cluster, rho_star = cands[j]
    if cluster is None:
        cluster = _new_cluster(state)
    _add_item(state, i, cluster, rho_star, family.align(x, rho_star))


def importance_marginal_log(log_w, log_f):
    """Self-normalized importance-sampling estimate, in log space."""
    denom = logsumexp(log_w)
    if not np.isfinite(denom):
        return -np.inf
    return float(logsumexp(log_w + log_f) - denom)


def mode_loglik_many(kind, Y, mode):
    """Log-likelihood of rows of Y under fixed mode parameters."""
    if kind == "bernoulli":
        return Y @ np.log(mode) + (1.0 - Y) @ np.log1p(-mode)
    mean, var = mode
    diff = Y - mean
    return -0.5 * np.sum(np.log(2.0 * np.pi * var)) - (diff * diff) @ (
        0.5 / var
    )


def _zero_gauss_logpdf_many(R, var, active):
    """Zero-mean Gaussian log-density of proposal rows over active dims."""
    if not np.any(active):
        return np.zeros(R.shape[0])
    v = var[active]
    ra = R[:, active]
    return -0.5 * np.sum(np.log(2.0 * np.pi * v)) - (ra * ra) @ (0.5 / v)


def _mixture_proposals(family, rng, L, means, stds):
    """Draw L parameter proposals from an equal-weight Gaussian mixture.

    Draws violating the family constraint are redrawn (the uniform
    renormalization this implies cancels in the self-normalized
    estimator); frozen (zero-hint) dimensions stay 0. Returns the
    proposals and their mixture log-density over the active dimensions.
    """
    dim = family.dim
    active = family.hints > 0
    n_comp = means.shape[0]
    comp = rng.integers(0, n_comp, size=L)
    noise = rng.standard_normal((L, dim))
    R = means[comp] + stds[comp] * noise
    R[:, ~active] = 0.0
    for _ in range(1000):
        bad = np.array([not family.valid_params(r) for r in R])
        if not bad.any():
            break
        nb = int(bad.sum())
        comp_b = rng.integers(0, n_comp, size=nb)
        noise_b = rng.standard_normal((nb, dim))
        R[bad] = means[comp_b] + stds[comp_b] * noise_b
        R[np.ix_(bad, ~active)] = 0.0
    else:
        R[[not family.valid_params(r) for r in R]] = 0.0

    comp_logs = np.empty((n_comp, L))
    for j in range(n_comp):
        d = R[:, active] - means[j][active]
        v = stds[j][active] ** 2
        comp_logs[j] = -0.5 * np.sum(np.log(2.0 * np.pi * v)) - (d * d) @ (0.5 / v)
    log_q = logsumexp(comp_logs, axis=0) - math.log(n_comp)
    return R, log_q


def propose_transforms(state, i, L, prev_cluster_id=None):
    """Draw L proposals and their mixture log-density q.

    The proposal mixes, with equal weight: the item's current transform
    perturbed at 0.25 x hint, a zero-mean draw at the hints, and (when the
    item's previous cluster is still live) a zero-mean draw at that
    cluster's posterior-mode transform variances.
    """
    family = state.family
    dim = family.dim
    hints = family.hints
    active = hints > 0
    means = [state.rho[i].copy(), np.zeros(dim)]
    stds = [0.25 * hints, hints.copy()]
    if prev_cluster_id is not None and prev_cluster_id in state.clusters:
        phi = state.clusters[prev_cluster_id].phi_mode()
        means.append(np.zeros(dim))
        stds.append(np.where(active, np.sqrt(phi), 0.0))
    return _mixture_proposals(family, state.rng, L, np.stack(means), np.stack(stds))


def sampler2_step(state, i, L=None):
    """Collapsed-transform update via shared importance samples."""
    L = state.hp.L if L is None else int(L)
    if L < 1:
        raise ValueError("L must be >= 1")
    prev = state.z[i] if state.z[i] != UNASSIGNED else None
    _remove_item(state, i)
    x = state.items[i]
    family = state.family
    ids, crp_logs, crp_new = _crp_log_weights(state)
    kind = state.prior_data_stats.kind

    if family.dim == 0:
        # No transform to integrate: exact collapsed predictives.
        scores = [
            crp_k + state.clusters[k].data_stats.logpredictive(x)
            for k, crp_k in zip(ids, crp_logs)
        ]
        cands = [state.clusters[k] for k in ids]
        if state.gamma > 0:
            scores.append(crp_new + state.prior_data_stats.logpredictive(x))
            cands.append(None)
        j = _sample_categorical(state.rng, scores)
        cluster = cands[j] or _new_cluster(state)
        _add_item(state, i, cluster, np.zeros(0), x)
        return

    R, log_q = propose_transforms(state, i, L, prev_cluster_id=prev)
    Y = np.empty((L, state.items.shape[1]))
    for l in range(L):
        Y[l] = family.align(x, R[l])
    state.transform_calls += L

    active = family.hints > 0
    phi_prior = state.prior_t_stats.mode()
    theta_prior = state.prior_data_stats.mode()
    log_w_fresh = _zero_gauss_logpdf_many(R, phi_prior, active) - log_q
    log_f_fresh = mode_loglik_many(kind, Y, theta_prior)
    marg_fresh = importance_marginal_log(log_w_fresh, log_f_fresh)

    cands = []
    scores = []
    pick = {}
    for k, crp_k in zip(ids, crp_logs):
        c = state.clusters[k]
        log_w = _zero_gauss_logpdf_many(R, c.phi_mode(), active) - log_q
        log_f = mode_loglik_many(kind, Y, c.theta_mode())
        marg = importance_marginal_log(log_w, log_f)
        if not np.isfinite(marg):
            marg = marg_fresh  # proposal missed this cluster entirely
        cands.append(c)
        scores.append(crp_k + marg)
        pick[k] = int(np.argmax(log_w + log_q + log_f))  # p(rho|phi) p(y|theta)
    if state.gamma > 0:
        cands.append(None)
        scores.append(crp_new + marg_fresh)
        pick[FRESH] = int(np.argmax(log_w_fresh + log_q + log_f_fresh))

    j = _sample_categorical(state.rng, scores)
    cluster = cands[j]
    if cluster is None:
        cluster = _new_cluster(state)
        l_star = pick[FRESH]
    else:
        l_star = pick[cluster.id]
    _add_item(state, i, cluster, R[l_star], Y[l_star])


def resample_gamma(state):
    """Escobar-West auxiliary-variable update of the DP concentration."""
    k = state.n_clusters
    n = _total_weight(state)
    if k < 1 or n < 1:
        return state.gamma
    g_a = state.hp.gamma_prior_a
    g_b = state.hp.gamma_prior_b
    eta = state.rng.beta(state.gamma + 1.0, n)
    rate = g_b - math.log(eta)
    w1 = (g_a + k - 1.0) / (n * rate + g_a + k - 1.0)
    shape = g_a + k if state.rng.random() < w1 else g_a + k - 1.0
    state.gamma = max(state.rng.gamma(shape, 1.0 / rate), GAMMA_FLOOR)
    return state.gamma


def seed_clusters(state, labeled, replication=1):
    """Pre-populate clusters from labeled items.

    ``labeled`` is a list of (item index, label) pairs. One locked cluster
    is created per distinct label; each labeled item contributes its raw
    data (at identity transform) ``replication`` times to the cluster's
    statistics, and is excluded from resampling. Memory does not grow with
    the replication factor: only the statistics are stored.
    """
    if replication < 1:
        raise ValueError("replication must be >= 1")
    idx_seen = set()
    for idx, _ in labeled:
        if idx in idx_seen:
            raise ValueError(f"item {idx} is labeled more than once")
        idx_seen.add(idx)
    if idx_seen and np.any(state.z[list(idx_seen)] != UNASSIGNED):
        raise ValueError("seed items must be unassigned; use init='unassigned'")

    by_label = {}
    for idx, label in labeled:
        by_label.setdefault(label, []).append(idx)

    for label in sorted(by_label, key=str):
        c = _new_cluster(state)
        c.locked = True
        state.clusters[c.id] = c
        zero = np.zeros(state.family.dim)
        for idx in by_label[label]:
            state.fixed[idx] = True
            state.z[idx] = c.id
            state.rho[idx] = zero
            state.aligned[idx] = state.items[idx]
            for _ in range(replication):
                c.data_stats.add(state.items[idx])
                c.t_stats.add(zero)
            c.seed_members += 1
            c.seed_weight += replication
        c.seed_data_stats = c.data_stats.copy()
        c.seed_t_stats = c.t_stats.copy()
    return state


def gibbs_iteration(state, sampler=1, L=None, budget=None, validate=True):
    """One full pass: fresh permutation, per-item step, concentration."""
    free = np.flatnonzero(~state.fixed)
    order = free[state.rng.permutation(free.size)]
    for i in order:
        if sampler == 1:
            sampler1_step(state, i, budget=budget)
        elif sampler == 2:
            sampler2_step(state, i, L=L)
        else:
            raise ValueError("sampler must be 1 or 2")
    if not state.gamma_locked and state.n_clusters >= 1 and state.n >= 1:
        resample_gamma(state)
    state.iteration += 1
    if validate:
        check_state(state)
    score = joint_score(state)
    state.trace.append(
        (state.iteration, state.n_clusters, state.gamma, score)
    )
    if state.best is None or score > state.best[0]:
        state.best = (score, state.iteration, state.z.copy(), state.rho.copy())
    return state


def joint_score(state):
    """Mode-plug-in joint log score used for tracing and best-state picks."""
    score = 0.0
    n_assigned = 0
    for k, c in state.clusters.items():
        mask = state.z == k
        m = int(mask.sum())
        if m:
            theta = c.theta_mode()
            score += float(np.sum(mode_loglik_many(
                state.prior_data_stats.kind, state.aligned[mask], theta
            )))
            if state.family.dim > 0:
                phi = c.phi_mode()
                score += float(
                    np.sum(_zero_gauss_logpdf_many(
                        state.rho[mask], phi, np.ones(state.family.dim, bool)
                    ))
                )
        n_assigned += m
        if c.n_items > 0:
            score += float(gammaln(c.n_items))
    if state.gamma > 0 and n_assigned > 0:
        score += state.n_clusters * math.log(state.gamma)
        score += float(gammaln(state.gamma) - gammaln(state.gamma + n_assigned))
    return score


def check_state(state, rtol=1e-9):
    """Verify partition bookkeeping and rebuild stats from scratch."""
    assigned = state.z != UNASSIGNED
    for k in np.unique(state.z[assigned]):
        if k not in state.clusters:
            raise RuntimeError(f"assignment points at dead cluster {k}")
    total = 0
    for k, c in state.clusters.items():
        mask = state.z == k
        unfixed = int(np.sum(mask & ~state.fixed))
        fixed = int(np.sum(mask & state.fixed))
        if unfixed != c.members or fixed != c.seed_members:
            raise RuntimeError(f"member counts for cluster {k} are stale")
        if c.crp_weight <= 0 and not c.locked:
            raise RuntimeError(f"empty unlocked cluster {k} survived")
        rebuilt_d = (
            c.seed_data_stats.copy()
            if c.seed_data_stats is not None
            else make_data_stats(state.hp, state.items.shape[1])
        )
        rebuilt_t = (
            c.seed_t_stats.copy()
            if c.seed_t_stats is not None
            else make_transform_stats(state.hp, state.family)
        )
        for i in np.flatnonzero(mask & ~state.fixed):
            rebuilt_d.add(state.aligned[i])
            rebuilt_t.add(state.rho[i])
        if not stats_allclose(rebuilt_d, c.data_stats, rtol=rtol):
            raise RuntimeError(f"data statistics for cluster {k} drifted")
        if not stats_allclose(rebuilt_t, c.t_stats, rtol=rtol):
            raise RuntimeError(f"transform statistics for cluster {k} drifted")
        total += c.n_items
    if total != int(assigned.sum()):
        raise RuntimeError("cluster membership does not partition the data")
    return True


def run_jac(
    items,
    family,
    hp,
    sampler=1,
    iters=None,
    seed=None,
    labeled=None,
    replication=1,
    gamma=None,
    workers=1,
    parallel=False,
    validate=True,
):
    """Drive a full run; returns the final state (trace and best inside)."""
    iters = hp.iters if iters is None else iters
    rng = np.random.default_rng(hp.seed if seed is None else seed)
    init = "unassigned" if labeled else "single"
    state = init_jac(items, family, hp, rng, gamma=gamma, init=init)
    if state.gamma == 0.0 and not labeled:
        raise ValueError("concentration 0 requires seeded clusters")
    if labeled:
        seed_clusters(state, labeled, replication)
    for _ in range(iters):
        if parallel:
            from .distributed import parallel_iteration

            parallel_iteration(state, workers=workers, L=state.hp.L, validate=validate)
        else:
            gibbs_iteration(state, sampler=sampler, validate=validate)
    return state

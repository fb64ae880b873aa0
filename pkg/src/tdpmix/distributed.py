"""Deterministic data-parallel sampling iterations.

Each iteration freezes a snapshot of the cluster parameters (posterior
modes, CRP weights, concentration), maps every item against it with the
collapsed-transform sampler logic, then reduces: cluster statistics are
rebuilt from scratch per cluster and the concentration is resampled once.
Because parameters update once per iteration instead of after every item,
this is a standard (not Rao-Blackwellized) sampler schedule.

Every item draws from its own generator, seeded by (iteration seed, item
index), so the result is bit-identical for any worker count or execution
order. Items that draw a fresh cluster in the same iteration are merged
into one new cluster during the reduce.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import jac as jac_mod
from .hyper import make_data_stats, make_transform_stats
from .jac import (
    FRESH,
    UNASSIGNED,
    _mixture_proposals,
    _zero_gauss_logpdf_many,
    check_state,
    importance_marginal_log,
    joint_score,
    mode_loglik_many,
)

__all__ = ["Snapshot", "make_snapshot", "map_item", "reduce_clusters", "parallel_iteration"]


@dataclass(frozen=True)
class Snapshot:
    """Immutable view of the model for one map phase."""

    iteration: int
    gamma: float
    ids: tuple
    theta: tuple
    phi: tuple
    weights: tuple
    theta_prior: object
    phi_prior: np.ndarray
    family: object
    kind: str
    total_weight: float


def make_snapshot(state):
    ids = tuple(state.live_ids())
    return Snapshot(
        iteration=state.iteration,
        gamma=state.gamma,
        ids=ids,
        theta=tuple(state.clusters[k].theta_mode() for k in ids),
        phi=tuple(state.clusters[k].phi_mode() for k in ids),
        weights=tuple(float(state.clusters[k].crp_weight) for k in ids),
        theta_prior=state.prior_data_stats.mode(),
        phi_prior=state.prior_t_stats.mode(),
        family=state.family,
        kind=state.prior_data_stats.kind,
        total_weight=float(sum(state.clusters[k].crp_weight for k in ids)),
    )


def map_item(snapshot, item, z_i, rho_i, L, rng):
    """Pure per-item update against a frozen snapshot.

    Returns (new assignment, new transform, aligned item); the assignment
    is ``FRESH`` when a new cluster is drawn. Mutates nothing shared.
    """
    family = snapshot.family
    denom = snapshot.total_weight + snapshot.gamma
    crp_logs = [math.log(w / denom) for w in snapshot.weights]
    crp_new = math.log(snapshot.gamma / denom) if snapshot.gamma > 0 else -np.inf

    if family.dim == 0:
        scores = [
            c + mode_loglik_many(snapshot.kind, item[None, :], th)[0]
            for c, th in zip(crp_logs, snapshot.theta)
        ]
        labels = list(snapshot.ids)
        if snapshot.gamma > 0:
            scores.append(
                crp_new
                + mode_loglik_many(snapshot.kind, item[None, :], snapshot.theta_prior)[0]
            )
            labels.append(FRESH)
        j = jac_mod._sample_categorical(rng, scores)
        return labels[j], np.zeros(0), np.asarray(item, dtype=float)

    hints = family.hints
    active = hints > 0
    means = [np.asarray(rho_i, dtype=float), np.zeros(family.dim)]
    stds = [0.25 * hints, hints.copy()]
    if z_i in snapshot.ids:
        phi = snapshot.phi[snapshot.ids.index(z_i)]
        means.append(np.zeros(family.dim))
        stds.append(np.where(active, np.sqrt(phi), 0.0))
    R, log_q = _mixture_proposals(family, rng, L, np.stack(means), np.stack(stds))
    Y = np.empty((L, item.size))
    for l in range(L):
        Y[l] = family.align(item, R[l])

    log_w_fresh = _zero_gauss_logpdf_many(R, snapshot.phi_prior, active) - log_q
    log_f_fresh = mode_loglik_many(snapshot.kind, Y, snapshot.theta_prior)
    marg_fresh = importance_marginal_log(log_w_fresh, log_f_fresh)

    labels = []
    scores = []
    pick = {}
    for k, crp_k, theta, phi in zip(
        snapshot.ids, crp_logs, snapshot.theta, snapshot.phi
    ):
        log_w = _zero_gauss_logpdf_many(R, phi, active) - log_q
        log_f = mode_loglik_many(snapshot.kind, Y, theta)
        marg = importance_marginal_log(log_w, log_f)
        if not np.isfinite(marg):
            marg = marg_fresh
        labels.append(k)
        scores.append(crp_k + marg)
        pick[k] = int(np.argmax(log_w + log_q + log_f))
    if snapshot.gamma > 0:
        labels.append(FRESH)
        scores.append(crp_new + marg_fresh)
        pick[FRESH] = int(np.argmax(log_w_fresh + log_q + log_f_fresh))

    j = jac_mod._sample_categorical(rng, scores)
    z_new = labels[j]
    l_star = pick[z_new]
    return z_new, R[l_star], Y[l_star]


def _map_chunk(args):
    snapshot, rows, L = args
    out = []
    for i, item, z_i, rho_i, seed_seq in rows:
        rng = np.random.default_rng(seed_seq)
        out.append((i,) + map_item(snapshot, item, z_i, rho_i, L, rng))
    return out


def reduce_clusters(state, mapped):
    """Rebuild every cluster's statistics from the complete map output.

    ``mapped`` holds (index, assignment, rho, aligned) for every free
    item. Fresh draws all land in one newly minted cluster. Statistics are
    accumulated in item-index order, so the result is independent of the
    order the map ran in.
    """
    fresh_id = None
    if any(z == FRESH for _, z, _, _ in mapped):
        fresh_id = state.next_id
        state.next_id += 1

    for i, z_new, rho_new, y_new in mapped:
        state.z[i] = fresh_id if z_new == FRESH else z_new
        state.rho[i] = rho_new
        state.aligned[i] = y_new

    new_clusters = {}
    keep = {k: c for k, c in state.clusters.items()}
    wanted = set(np.unique(state.z[state.z != UNASSIGNED]).tolist())
    for k, old in keep.items():
        if old.seed_data_stats is not None or old.locked or k in wanted:
            if old.seed_data_stats is not None:
                c = jac_mod.Cluster(
                    k, old.seed_data_stats.copy(), old.seed_t_stats.copy()
                )
                c.seed_data_stats = old.seed_data_stats
                c.seed_t_stats = old.seed_t_stats
                c.seed_members = old.seed_members
                c.seed_weight = old.seed_weight
            else:
                c = jac_mod.Cluster(
                    k,
                    make_data_stats(state.hp, state.items.shape[1]),
                    make_transform_stats(state.hp, state.family),
                )
            c.locked = old.locked
            new_clusters[k] = c
    if fresh_id is not None:
        new_clusters[fresh_id] = jac_mod.Cluster(
            fresh_id,
            make_data_stats(state.hp, state.items.shape[1]),
            make_transform_stats(state.hp, state.family),
        )

    for i in np.flatnonzero((state.z != UNASSIGNED) & ~state.fixed):
        c = new_clusters[state.z[i]]
        c.data_stats.add(state.aligned[i])
        c.t_stats.add(state.rho[i])
        c.members += 1

    for k in list(new_clusters):
        c = new_clusters[k]
        if c.crp_weight <= 0 and not c.locked:
            del new_clusters[k]
    state.clusters = new_clusters
    return new_clusters


def parallel_iteration(state, workers=1, L=None, validate=True):
    """Snapshot -> map over all free items -> barrier -> reduce.

    All randomness derives from one integer drawn from the state's
    generator, then fanned out per item, so any worker count produces the
    same trajectory. A failing map task propagates and leaves the state
    untouched.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    L = state.hp.L if L is None else int(L)
    iter_seed = int(state.rng.integers(0, 2**63 - 1))
    children = np.random.SeedSequence(iter_seed).spawn(state.n + 1)
    snapshot = make_snapshot(state)
    free = np.flatnonzero(~state.fixed)
    rows = [
        (int(i), state.items[i], int(state.z[i]), state.rho[i].copy(), children[i])
        for i in free
    ]

    if workers == 1 or len(rows) <= 1:
        mapped = _map_chunk((snapshot, rows, L))
    else:
        n_chunks = min(len(rows), workers * 4)
        chunks = [
            (snapshot, rows[j::n_chunks], L) for j in range(n_chunks)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_map_chunk, chunks))
        mapped = [row for part in parts for row in part]
    mapped.sort(key=lambda row: row[0])
    state.transform_calls += L * len(mapped) if state.family.dim > 0 else 0

    reduce_clusters(state, mapped)
    if not state.gamma_locked and state.n_clusters >= 1 and state.n >= 1:
        gamma_rng = np.random.default_rng(children[state.n])
        _resample_gamma_with(state, gamma_rng)
    state.iteration += 1
    if validate:
        check_state(state)
    score = joint_score(state)
    state.trace.append((state.iteration, state.n_clusters, state.gamma, score))
    if state.best is None or score > state.best[0]:
        state.best = (score, state.iteration, state.z.copy(), state.rho.copy())
    return state


def _resample_gamma_with(state, rng):
    saved = state.rng
    state.rng = rng
    try:
        jac_mod.resample_gamma(state)
    finally:
        state.rng = saved

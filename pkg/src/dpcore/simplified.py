"""One-hot, mean-only variant of the coreset loop and its order-invariance harness.

Batches are summarised by their mean.  A batch joins the closest core mean if
it lies within ``theta`` of it, otherwise it opens a new cluster.  Under the
well-separated-clusters assumption (every cluster's hull diameter is below
``theta`` and every pair of hulls is further than ``theta`` apart) the
assignments are correct for every arrival order, and with ``alpha = 1/|G|``
each core mean is the exact mean of its cluster.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

HARMONIC = "harmonic"
FIXED = "fixed"


class SeparationError(ValueError):
    """The input violates the well-separated-clusters assumption."""


@dataclass
class SimplifiedConfig:
    theta: float
    alpha_mode: str = HARMONIC
    alpha: float = 0.5

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be > 0")
        if self.alpha_mode not in (HARMONIC, FIXED):
            raise ValueError(f"unknown alpha mode {self.alpha_mode!r}")
        if self.alpha_mode == FIXED and not 0 < self.alpha <= 1:
            raise ValueError("fixed alpha must lie in (0, 1]")


@dataclass
class ClusterState:
    core_means: list[np.ndarray] = field(default_factory=list)
    core_prompts: list = field(default_factory=list)
    member_counts: list[int] = field(default_factory=list)
    assignments: list[int] = field(default_factory=list)


def simplified_step(state: ClusterState, batch_mean, config: SimplifiedConfig,
                    learner=None, refiner=None):
    """Assign one batch mean; returns ``(cluster index, state)``.

    ``learner(batch_mean)`` produces the prompt of a new cluster and
    ``refiner(prompt, batch_mean)`` updates an existing one; both are optional.
    """
    b = np.asarray(batch_mean, float)
    if not np.all(np.isfinite(b)):
        raise ValueError("batch mean must be finite")
    if state.core_means:
        d = np.linalg.norm(np.asarray(state.core_means) - b, axis=1)
        j = int(np.argmin(d))
        if d[j] > config.theta:
            j = -1
    else:
        j = -1
    if j < 0:
        j = len(state.core_means)
        state.core_means.append(b.copy())
        state.member_counts.append(1)
        state.core_prompts.append(learner(b) if learner else None)
    else:
        state.member_counts[j] += 1
        a = 1.0 / state.member_counts[j] if config.alpha_mode == HARMONIC else config.alpha
        state.core_means[j] = (1 - a) * state.core_means[j] + a * b
        if refiner is not None:
            state.core_prompts[j] = refiner(state.core_prompts[j], b)
    state.assignments.append(j)
    return j, state


def run_simplified(batch_means, config: SimplifiedConfig, order=None, **kw) -> ClusterState:
    """Process ``batch_means`` in ``order``; assignments are stored per original index."""
    means = np.asarray(batch_means, float)
    order = range(len(means)) if order is None else order
    state = ClusterState()
    by_index = [None] * len(means)
    for i in order:
        j, state = simplified_step(state, means[i], config, **kw)
        by_index[i] = j
    state.assignments = by_index
    return state


def hull_diameter(points) -> float:
    """Diameter of the convex hull, which equals the largest pairwise distance."""
    p = np.asarray(points, float)
    if len(p) < 2:
        return 0.0
    return float(max(np.linalg.norm(a - b) for a, b in itertools.combinations(p, 2)))


def hull_distance(a, b) -> float:
    """Distance between the convex hulls of two point sets (small QP)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    na, nb = len(a), len(b)
    if na == 1 and nb == 1:
        return float(np.linalg.norm(a[0] - b[0]))

    def obj(z):
        r = z[:na] @ a - z[na:] @ b
        return r @ r, np.concatenate([2 * a @ r, -2 * b @ r])

    cons = [{"type": "eq", "fun": lambda z: z[:na].sum() - 1, "jac": lambda z: np.r_[np.ones(na), np.zeros(nb)]},
            {"type": "eq", "fun": lambda z: z[na:].sum() - 1, "jac": lambda z: np.r_[np.zeros(na), np.ones(nb)]}]
    z0 = np.r_[np.full(na, 1 / na), np.full(nb, 1 / nb)]
    res = minimize(obj, z0, jac=True, bounds=[(0, 1)] * (na + nb), constraints=cons,
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    qp = math.sqrt(max(res.fun, 0.0))
    # never report more than the closest vertex pair
    vertex = min(np.linalg.norm(x - y) for x in a for y in b)
    return float(min(qp, vertex))


def check_separation(batch_means, labels, theta: float):
    """Raise :class:`SeparationError` unless diam < theta < hull distance for all clusters."""
    means, labels = np.asarray(batch_means, float), np.asarray(labels)
    groups = [means[labels == g] for g in np.unique(labels)]
    for g in groups:
        if hull_diameter(g) >= theta:
            raise SeparationError(f"cluster diameter {hull_diameter(g):.4g} >= theta {theta}")
    for g, h in itertools.combinations(groups, 2):
        dist = hull_distance(g, h)
        if dist <= theta:
            raise SeparationError(f"cluster hulls {dist:.4g} apart, not beyond theta {theta}")


def same_partition(a, b) -> bool:
    """True iff label sequences agree up to a bijective relabelling."""
    if len(a) != len(b):
        return False
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def check_prop1(ground_truth, batch_means, config: SimplifiedConfig, order=None) -> bool:
    """Assignments match the ground-truth clusters (up to relabelling)."""
    check_separation(batch_means, ground_truth, config.theta)
    state = run_simplified(batch_means, config, order)
    return same_partition(list(ground_truth), state.assignments)


def _orders(n: int, rng: np.random.Generator, exhaustive_max: int = 7, n_samples: int = 100):
    if n <= exhaustive_max:
        return list(itertools.permutations(range(n)))
    return [tuple(rng.permutation(n)) for _ in range(n_samples)]


@dataclass
class InvarianceReport:
    holds: bool
    permutations: int
    assignments_invariant: bool
    means_invariant: bool
    max_mean_rel_err: float
    counterexample: tuple | None = None


def _canonical_means(state: ClusterState, labels) -> dict:
    """Core mean keyed by the ground-truth label of its members."""
    out = {}
    for i, j in enumerate(state.assignments):
        out.setdefault(labels[i], state.core_means[j])
    return out


def order_invariance(batch_means, labels, config: SimplifiedConfig, seed: int = 0,
                     exhaustive_max: int = 7, n_samples: int = 100, rtol: float = 1e-9) -> InvarianceReport:
    means, labels = np.asarray(batch_means, float), list(labels)
    check_separation(means, labels, config.theta)
    groups = {g: means[[i for i, l in enumerate(labels) if l == g]].mean(axis=0) for g in set(labels)}
    ref_assign, worst, perms = None, 0.0, 0
    assign_ok, means_ok, counter = True, True, None
    for order in _orders(len(means), np.random.default_rng(seed), exhaustive_max, n_samples):
        perms += 1
        st = run_simplified(means, config, order)
        if ref_assign is None:
            ref_assign = st.assignments
        if not (same_partition(ref_assign, st.assignments) and same_partition(labels, st.assignments)):
            assign_ok, counter = False, counter or order
        if config.alpha_mode == HARMONIC:
            for g, mu in _canonical_means(st, labels).items():
                err = float(np.linalg.norm(mu - groups[g]) / max(np.linalg.norm(groups[g]), 1e-300))
                worst = max(worst, err)
                if err > rtol:
                    means_ok, counter = False, counter or order
    holds = assign_ok and (means_ok or config.alpha_mode != HARMONIC)
    return InvarianceReport(holds, perms, assign_ok, means_ok, worst, None if holds else counter)


def check_prop2_order_invariance(batch_means, labels, config: SimplifiedConfig, seed: int = 0) -> bool:
    """Assignments are order-independent; with harmonic alpha the core means are too."""
    return order_invariance(batch_means, labels, config, seed).holds


def cluster_prompts(batch_means, config: SimplifiedConfig, learner, order=None) -> dict:
    """Per ground-truth-free cluster, a prompt learned from the cluster's recomputed mean.

    Keys are frozensets of member indices, so results compare across orders.
    """
    state = run_simplified(batch_means, config, order)
    members: dict[int, list[int]] = {}
    for i, j in enumerate(state.assignments):
        members.setdefault(j, []).append(i)
    return {frozenset(m): learner(state.core_means[j]) for j, m in members.items()}


def check_prop3_prompt_invariance(batch_means, labels, config: SimplifiedConfig, learner,
                                  seed: int = 0, n_samples: int = 100, atol: float = 1e-9) -> bool:
    """Prompts learned from each cluster's mean agree across arrival orders."""
    check_separation(batch_means, labels, config.theta)
    ref = None
    for order in _orders(len(batch_means), np.random.default_rng(seed), n_samples=n_samples):
        got = cluster_prompts(batch_means, config, learner, order)
        if ref is None:
            ref = got
        elif got.keys() != ref.keys() or any(
                not np.allclose(got[k], ref[k], rtol=0, atol=atol) for k in ref):
            return False
    return True


def refinement_drift(batch_means, config: SimplifiedConfig, learner, refiner,
                     seed: int = 0, n_samples: int = 50) -> float:
    """Largest cross-order discrepancy of core prompts when every join refines the prompt.

    Zero would mean the refinement path is order-independent too; in general
    it is not, and this measures by how much.
    """
    means = np.asarray(batch_means, float)
    ref, worst = None, 0.0
    for order in _orders(len(means), np.random.default_rng(seed), n_samples=n_samples):
        st = run_simplified(means, config, order, learner=learner, refiner=refiner)
        members: dict[int, list[int]] = {}
        for i, j in enumerate(st.assignments):
            members.setdefault(j, []).append(i)
        got = {frozenset(m): np.asarray(st.core_prompts[j]) for j, m in members.items()}
        if ref is None:
            ref = got
            continue
        for k in ref:
            worst = max(worst, float(np.max(np.abs(got[k] - ref[k]))))
    return worst


def make_separated_instance(rng: np.random.Generator, n_clusters: int, n_batches: int,
                            dim: int = 4, theta: float = 1.0, spread: float = 0.3,
                            gap: float = 10.0):
    """Random batch means in ``n_clusters`` tight blobs ``gap * theta`` apart.

    Every cluster receives at least one batch.  Returns ``(means, labels)``.
    """
    if n_batches < n_clusters:
        raise ValueError("need at least one batch per cluster")
    centres = [rng.normal(size=dim)]
    while len(centres) < n_clusters:
        c = rng.normal(size=dim) * gap * theta
        if all(np.linalg.norm(c - o) > gap * theta for o in centres):
            centres.append(c)
    labels = np.r_[np.arange(n_clusters), rng.integers(0, n_clusters, n_batches - n_clusters)]
    rng.shuffle(labels)
    offsets = rng.normal(size=(n_batches, dim))
    offsets *= (spread * theta / 2) * rng.uniform(0, 1, (n_batches, 1)) / np.linalg.norm(offsets, axis=1, keepdims=True)
    return np.asarray(centres)[labels] + offsets, labels

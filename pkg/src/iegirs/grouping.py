"""Grouping-matrix construction, validation, and optimization.

A grouping assigns each of the N reflector elements to exactly one of Q
groups (every group non-empty); elements of a group share one reflection
phase. Constructors: equal-arc phase partition, circular k-means, adjacent
blocks, and a relaxed quadratic program driven by statistical CSI.
"""

import warnings
from dataclasses import dataclass
from math import comb, factorial

import numpy as np


@dataclass
class GroupingMatrix:
    """Assignment of N elements to groups labelled 1..num_groups.

    The binary Q x N matrix form is materialised on demand by matrix().
    repairs counts elements that were reassigned to fix empty groups.
    """

    assignment: np.ndarray
    num_groups: int
    repairs: int = 0
    converged: bool = True

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=int)

    @property
    def num_elements(self):
        return self.assignment.shape[0]

    def matrix(self):
        g = np.zeros((self.num_groups, self.num_elements))
        g[self.assignment - 1, np.arange(self.num_elements)] = 1.0
        return g

    def group_sizes(self):
        return np.bincount(self.assignment - 1, minlength=self.num_groups)


def validate(grouping):
    """Check the three grouping constraints; None if valid, else a report.

    Checked in order: entries are valid group labels (binary matrix), each
    element belongs to exactly one group (guaranteed by the assignment
    encoding), and every group is non-empty.
    """
    a = grouping.assignment
    q = grouping.num_groups
    bad = np.where((a < 1) | (a > q))[0]
    if bad.size:
        return f"element {bad[0]} has label {a[bad[0]]} outside [1, {q}]"
    sizes = np.bincount(a - 1, minlength=q)
    empty = np.where(sizes == 0)[0]
    if empty.size:
        return f"group {empty[0] + 1} is empty"
    return None


def count_groupings(n, q):
    """Exact number of distinct groupings of n elements into q groups.

    Evaluates (1/q!) * sum_{i=0..q} (-1)^i C(q,i) (q-i)^n with exact integer
    arithmetic (a Stirling number of the second kind). Returns 0 for n < q.
    """
    if q < 1:
        raise ValueError("group count must be >= 1")
    if n < q:
        return 0
    total = sum((-1) ** i * comb(q, i) * (q - i) ** n for i in range(q + 1))
    count, rem = divmod(total, factorial(q))
    assert rem == 0
    return count


def adjacent_grouping(n, q):
    """Contiguous index blocks of size ceil(n/q) or floor(n/q)."""
    if not 1 <= q <= n:
        raise ValueError("need 1 <= q <= n")
    assignment = np.empty(n, dtype=int)
    for label, block in enumerate(np.array_split(np.arange(n), q), start=1):
        assignment[block] = label
    return GroupingMatrix(assignment=assignment, num_groups=q)


def identity_grouping(n):
    """One element per group (ungrouped surface)."""
    return GroupingMatrix(assignment=np.arange(1, n + 1), num_groups=n)


def _circ_dist01(a, b):
    """Circular distance between fractional positions in [0, 1)."""
    d = np.abs(a - b)
    return np.minimum(d, 1.0 - d)


def repair_empty_by_arc(assignment, q, frac_pos):
    """Fill empty groups with the nearest-phase elements from groups of >= 2."""
    repairs = 0
    sizes = np.bincount(assignment - 1, minlength=q)
    for label in range(1, q + 1):
        while sizes[label - 1] == 0:
            center = (label - 0.5) / q
            movable = np.where(sizes[assignment - 1] >= 2)[0]
            pick = movable[np.argmin(_circ_dist01(frac_pos[movable], center))]
            sizes[assignment[pick] - 1] -= 1
            assignment[pick] = label
            sizes[label - 1] += 1
            repairs += 1
    return repairs


_ARC_QUANTUM = 2.0 ** 40


def arc_assignment(frac_pos, q):
    """Group label 1 + floor(q * frac) for fractional positions, clamped to q.

    Positions are quantized at 2^-40 first so that a boundary atom (e.g. the
    zero-phase leading element of a ramp) bins identically whether its
    position was computed as 0 or as 1 - epsilon.
    """
    frac = np.mod(np.round(np.asarray(frac_pos) * _ARC_QUANTUM) / _ARC_QUANTUM, 1.0)
    return 1 + np.minimum((q * frac).astype(int), q - 1)


def phase_partition_grouping(delta, n, q):
    """Equal-arc partition of the fractional phase ramp frac((n-1)*delta).

    Element n (1-based) has fractional position frac((n-1)*delta) and joins
    the group covering that arc of the unit interval. For irrational delta
    the positions equidistribute, so group sizes equalize as n grows. Empty
    groups (degenerate delta or small n) are repaired by moving the elements
    whose position is closest to the empty arc's center.
    """
    if not 1 <= q <= n:
        raise ValueError("need 1 <= q <= n")
    frac = np.mod(np.arange(n) * float(delta), 1.0)
    assignment = arc_assignment(frac, q)
    repairs = repair_empty_by_arc(assignment, q, frac)
    return GroupingMatrix(assignment=assignment, num_groups=q, repairs=repairs)


def circular_fit_objective(phases, grouping):
    """Sum of 1 - cos(phase - group mean direction), the Lloyd objective.

    Equals N - sum_q |z_q| with z_q the sum of unit phasors of group q, i.e.
    tighter phase groups leave a larger coherent sum.
    """
    z = np.zeros(grouping.num_groups, dtype=complex)
    np.add.at(z, grouping.assignment - 1, np.exp(1j * np.asarray(phases)))
    return float(len(phases) - np.abs(z).sum())


def _lloyd(phases, q, assignment, max_iter):
    """Lloyd iterations on the unit circle from an initial assignment."""
    phasors = np.exp(1j * phases)
    repairs = 0
    for _ in range(max_iter):
        z = np.zeros(q, dtype=complex)
        np.add.at(z, assignment - 1, phasors)
        sizes = np.bincount(assignment - 1, minlength=q)
        # refill empty clusters with the element worst-served by its own centroid
        for label in np.where(sizes == 0)[0] + 1:
            centroids = np.angle(z)
            cost = 1.0 - np.cos(phases - centroids[assignment - 1])
            movable = np.where(sizes[assignment - 1] >= 2)[0]
            pick = movable[np.argmax(cost[movable])]
            z[assignment[pick] - 1] -= phasors[pick]
            sizes[assignment[pick] - 1] -= 1
            assignment[pick] = label
            z[label - 1] += phasors[pick]
            sizes[label - 1] += 1
            repairs += 1
        centroids = np.angle(z)
        dist = 1.0 - np.cos(phases[:, None] - centroids[None, :])
        new_assignment = 1 + np.argmin(dist, axis=1)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
    g = GroupingMatrix(assignment=assignment, num_groups=q, repairs=repairs)
    if validate(g) is not None:
        g.repairs += repair_empty_by_arc(g.assignment, q, np.mod(phases / (2 * np.pi), 1.0))
    return g


def _farthest_point_seed(phases, q, rng):
    first = int(rng.integers(len(phases))) if rng is not None else 0
    centroids = [phases[first]]
    for _ in range(q - 1):
        d = np.min(1.0 - np.cos(phases[:, None] - np.asarray(centroids)[None, :]), axis=1)
        centroids.append(phases[int(np.argmax(d))])
    dist = 1.0 - np.cos(phases[:, None] - np.asarray(centroids)[None, :])
    return 1 + np.argmin(dist, axis=1)


def circular_knn_grouping(phases, q, rng=None, init=None, max_iter=200):
    """Cluster element phases on the unit circle into q groups.

    Runs Lloyd iterations (nearest-centroid assignment, centroid = direction
    of the summed unit phasors) from an equal-arc start and a farthest-point
    start, plus an optional caller-supplied initial assignment, and keeps the
    result with the smallest circular_fit_objective. The objective is
    non-increasing across iterations within each run.
    """
    phases = np.asarray(phases, dtype=float)
    n = phases.shape[0]
    if not 1 <= q <= n:
        raise ValueError("need 1 <= q <= n")
    inits = [arc_assignment(np.mod(-phases / (2 * np.pi), 1.0), q),
             _farthest_point_seed(phases, q, rng)]
    if init is not None:
        inits.append(np.asarray(init.assignment if isinstance(init, GroupingMatrix) else init, dtype=int))
    candidates = [_lloyd(phases, q, a.copy(), max_iter) for a in inits]
    return min(candidates, key=lambda g: circular_fit_objective(phases, g))


def combine_cascade(grouping, cascade):
    """Grouped cascade: row q is the sum of cascade rows assigned to group q."""
    cascade = np.asarray(cascade)
    vector_in = cascade.ndim == 1
    if vector_in:
        cascade = cascade[:, None]
    if cascade.shape[0] != grouping.num_elements:
        raise ValueError(f"cascade has {cascade.shape[0]} rows for {grouping.num_elements} elements")
    out = np.zeros((grouping.num_groups, cascade.shape[1]), dtype=cascade.dtype)
    np.add.at(out, grouping.assignment - 1, cascade)
    return out[:, 0] if vector_in else out


# ---------------------------------------------------------------------------
# Relaxed grouping program on statistical CSI


def project_columns_to_simplex(g):
    """Euclidean projection of every column onto {x >= 0, sum(x) = 1}."""
    q, n = g.shape
    u = -np.sort(-g, axis=0)
    css = np.cumsum(u, axis=0)
    j = np.arange(1, q + 1)[:, None]
    rho = np.sum(u * j > css - 1.0, axis=0)
    tau = (np.take_along_axis(css, rho[None, :] - 1, axis=0)[0] - 1.0) / rho
    return np.maximum(g - tau[None, :], 0.0)


def grouping_objective(g, cascades_stat, h_bu_stat, w_stat, v_stat, aux, weights):
    """Statistical alignment-minus-interference value of a grouping.

    g may be a GroupingMatrix or a relaxed Q x N array. Larger is better:
    the grouped statistical cascade should align with the statistical beams
    while holding cross-beam leakage down.
    """
    gm = g.matrix() if isinstance(g, GroupingMatrix) else np.asarray(g, dtype=float)
    alpha = np.sqrt(np.asarray(weights) * (1.0 + aux.varsigma))
    t = np.conj(v_stat) @ gm                                   # (N,)
    total = 0.0
    for k in range(cascades_stat.shape[0]):
        rows = t @ (cascades_stat[k] @ w_stat)                 # over beams j
        u = rows + np.conj(h_bu_stat[k]) @ w_stat
        total += 2.0 * alpha[k] * np.real(np.conj(aux.xi[k]) * rows[k])
        total -= np.abs(aux.xi[k]) ** 2 * np.sum(np.abs(u) ** 2)
    return float(total)


def _relaxed_objective_and_grad(g, proj, d_rows, alpha, xi, v_stat, gamma, rho):
    """Value and gradient of the relaxed program at fixed direction matrix gamma.

    proj[k] = cascades_stat[k] @ w_stat (N x K); d_rows[k] = direct-link row.
    """
    t = np.conj(v_stat) @ g
    total = rho * np.sum(gamma * g)
    gvec = np.zeros(proj.shape[1], dtype=complex)
    for k in range(proj.shape[0]):
        rows = t @ proj[k]
        u = rows + d_rows[k]
        total += 2.0 * alpha[k] * np.real(np.conj(xi[k]) * rows[k])
        total -= np.abs(xi[k]) ** 2 * np.sum(np.abs(u) ** 2)
        gvec += alpha[k] * np.conj(xi[k]) * proj[k][:, k] - np.abs(xi[k]) ** 2 * (proj[k] @ np.conj(u))
    grad = 2.0 * np.real(np.outer(np.conj(v_stat), gvec)) + rho * gamma
    return float(total), grad


def _round_with_margin_repair(g_relaxed, q):
    if q == 1:
        return np.ones(g_relaxed.shape[1], dtype=int), 0
    order = np.argsort(-g_relaxed, axis=0)
    assignment = order[0] + 1
    margin = np.take_along_axis(g_relaxed, order[:1], axis=0)[0] - \
        np.take_along_axis(g_relaxed, order[1:2], axis=0)[0]
    repairs = 0
    sizes = np.bincount(assignment - 1, minlength=q)
    for label in range(1, q + 1):
        while sizes[label - 1] == 0:
            movable = np.where(sizes[assignment - 1] >= 2)[0]
            pick = movable[np.lexsort((-g_relaxed[label - 1, movable], margin[movable]))[0]]
            sizes[assignment[pick] - 1] -= 1
            assignment[pick] = label
            sizes[label - 1] += 1
            repairs += 1
    return assignment, repairs


def relaxed_qp_grouping(cascades_stat, h_bu_stat, w_stat, v_stat, aux, q, weights=None,
                        rho=1.0, max_rounds=20, pg_steps=15, tol=1e-8, extra_starts=()):
    """Grouping from the relaxed statistical program.

    Alternates projected-gradient ascent over column-stochastic relaxed
    assignments (concave objective: linear alignment plus a negative
    interference quadratic plus rho * <gamma, G>) with updates of the column
    direction matrix gamma = G_n/||G_n||, then rounds each column to its
    argmax group, repairing empty groups by moving the smallest-margin
    columns. Falls back to the best of the rounded result, the warm starts
    (adjacent blocks, the equal-arc partition of the aggregate statistical
    cascade phase, and any caller-supplied extra_starts), measured by
    grouping_objective on the given statistical precoders.

    cascades_stat: (K, N, M) statistical per-element cascades; h_bu_stat:
    (K, M) statistical direct links; w_stat: (M, K) statistical beams;
    v_stat: (Q,) unit-modulus statistical reflection values; aux: statistical
    ratio auxiliaries (varsigma, xi).
    """
    k_users, n, _ = cascades_stat.shape
    if not 1 <= q <= n:
        raise ValueError("need 1 <= q <= n")
    if weights is None:
        weights = np.ones(k_users)
    weights = np.asarray(weights, dtype=float)
    alpha = np.sqrt(weights * (1.0 + aux.varsigma))
    xi = np.asarray(aux.xi)
    proj = np.stack([cascades_stat[k] @ w_stat for k in range(k_users)])
    d_rows = np.stack([np.conj(h_bu_stat[k]) @ w_stat for k in range(k_users)])

    aggregate = np.einsum("k,knk->n", alpha * np.conj(xi), proj)
    starts = [adjacent_grouping(n, q)]
    arc = GroupingMatrix(assignment=arc_assignment(np.mod(-np.angle(aggregate) / (2 * np.pi), 1.0), q),
                         num_groups=q)
    if validate(arc) is not None:
        arc.repairs = repair_empty_by_arc(arc.assignment, q, np.mod(-np.angle(aggregate) / (2 * np.pi), 1.0))
    starts.append(arc)
    starts.extend(extra_starts)

    def binary_obj(gm):
        return grouping_objective(gm, cascades_stat, h_bu_stat, w_stat, v_stat, aux, weights)

    g = max(starts, key=binary_obj).matrix()
    converged = False
    step = 1.0
    for _ in range(max_rounds):
        gamma = g / np.maximum(np.linalg.norm(g, axis=0, keepdims=True), 1e-300)
        moved = 0.0
        for _ in range(pg_steps):
            val, grad = _relaxed_objective_and_grad(g, proj, d_rows, alpha, xi, v_stat, gamma, rho)
            accepted = False
            for _ in range(40):
                g_new = project_columns_to_simplex(g + step * grad)
                val_new, _ = _relaxed_objective_and_grad(g_new, proj, d_rows, alpha, xi, v_stat, gamma, rho)
                if val_new >= val:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            moved = float(np.abs(g_new - g).max())
            g = g_new
            step *= 1.5
            if moved < tol:
                break
        if moved < tol:
            converged = True
            break
    if not converged:
        warnings.warn("relaxed grouping program hit its iteration cap; returning best rounded iterate")

    assignment, repairs = _round_with_margin_repair(g, q)
    rounded = GroupingMatrix(assignment=assignment, num_groups=q, repairs=repairs, converged=converged)
    best = max(starts + [rounded], key=binary_obj)
    best.converged = converged
    return best

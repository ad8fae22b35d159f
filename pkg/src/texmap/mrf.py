"""Markov random field over the face-adjacency graph, solved by min-sum LBP.

Labels are global view ids; each face's label set is its visible-view set.
Data costs come from per-face max-normalized quality (best view costs 0),
the smoothness term is a weighted Potts penalty on view-id inequality, and
the solver is synchronous (Jacobi) min-sum belief propagation with
messages normalized to minimum 0 after every pass. Ties in label ordering
always resolve to the smaller view id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError
from .mesh import AdjacencyGraph
from .quality import QualityTable

logger = logging.getLogger(__name__)

DEFAULT_SMOOTHNESS = 0.5
DEFAULT_LBP_ITERS = 50
DEFAULT_TOP_N = 3
DEFAULT_RATIO = 0.4
RATIO_EPSILON = 1e-6
MESSAGE_CONVERGENCE_TOL = 1e-9

_EMPTY_IDS = np.zeros(0, dtype=np.int64)
_EMPTY_COSTS = np.zeros(0, dtype=np.float64)


@dataclass
class CostVolume:
    """Per-face data costs over per-face label sets.

    labels[f] is an ascending array of view ids (empty for faces excluded
    from the graph); costs[f] the matching non-negative data costs.
    """

    labels: list
    costs: list

    @property
    def num_faces(self) -> int:
        return len(self.labels)


@dataclass
class BeliefVolume:
    """Final per-face, per-label costs C = data + sum of incoming messages."""

    labels: list
    costs: list
    iterations: int = 0

    @property
    def num_faces(self) -> int:
        return len(self.labels)


@dataclass
class CandidateSet:
    """Per-face ordered top-N surviving (view id, cost) lists."""

    view_ids: list  # list of (k,) int arrays, cost-ascending
    costs: list

    @property
    def num_faces(self) -> int:
        return len(self.view_ids)


def build_data_costs(qt: QualityTable) -> CostVolume:
    """Convert quality scores to data costs.

    E_data(F, l) = 1 - Q(F, l) / max_l' Q(F, l'), so the best view of every
    face costs 0 and all costs lie in [0, 1]. Faces whose qualities are all
    zero get uniform cost 0; faces visible in no view get empty label sets
    and are excluded from the graph.
    """
    labels = []
    costs = []
    for fq in qt.faces:
        if fq is None:
            labels.append(_EMPTY_IDS)
            costs.append(_EMPTY_COSTS)
            continue
        q = fq.q
        qmax = q.max()
        if qmax > 0:
            c = 1.0 - q / qmax
        else:
            c = np.zeros_like(q)
        labels.append(fq.view_ids.astype(np.int64))
        costs.append(c)
    return CostVolume(labels=labels, costs=costs)


def _directed_edges(graph: AdjacencyGraph, active: np.ndarray):
    """Directed edge arrays (src, dst, rev) over active faces only."""
    pairs = [
        (int(i), int(j))
        for i, j in np.asarray(graph.edges)
        if active[i] and active[j]
    ]
    src = []
    dst = []
    for i, j in pairs:
        src.extend((i, j))
        dst.extend((j, i))
    rev = np.arange(len(src), dtype=np.int64)
    rev ^= 1  # edges were appended in (i->j, j->i) pairs
    return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64), rev


def lbp_solve(
    graph: AdjacencyGraph,
    cost_volume: CostVolume,
    smoothness: float = DEFAULT_SMOOTHNESS,
    iters: int = DEFAULT_LBP_ITERS,
    tol: float = MESSAGE_CONVERGENCE_TOL,
) -> BeliefVolume:
    """Min-sum loopy belief propagation with a synchronous schedule.

    Messages start at all-zeros. Each pass updates every directed edge from
    the previous pass's buffer:

        m_new[i->j](l_j) = min_{l_i} [ E_data(i, l_i) + s * [l_i != l_j]
                                       + sum_{k in N(i) \\ j} m_old[k->i](l_i) ]

    then subtracts each message's minimum entry. Terminates after ``iters``
    passes or when the largest message change drops below ``tol``. Final
    costs are C(F, l) = E_data(F, l) + sum of incoming messages.

    Args:
        graph: Face adjacency; must cover the cost volume's faces.
        cost_volume: Per-face label sets and data costs.
        smoothness: Potts weight, >= 0.
        iters: Maximum message passes, >= 1.

    Returns:
        BeliefVolume with the same label sets as the input.

    Raises:
        ConsistencyError: Face-count mismatch between graph and costs.
    """
    if smoothness < 0:
        raise ValueError(f"smoothness must be >= 0, got {smoothness}")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    n_faces = cost_volume.num_faces
    if len(graph.neighbors) != n_faces:
        raise ConsistencyError(
            f"adjacency graph has {len(graph.neighbors)} faces, costs have {n_faces}"
        )

    active = np.array([len(l) > 0 for l in cost_volume.labels], dtype=bool)
    label_count = np.array([len(l) for l in cost_volume.labels], dtype=np.int64)
    width = int(label_count.max()) if n_faces else 0
    if width == 0:
        return BeliefVolume(labels=list(cost_volume.labels), costs=list(cost_volume.costs))

    labels_pad = np.full((n_faces, width), -1, dtype=np.int64)
    data_pad = np.full((n_faces, width), np.inf)
    valid = np.zeros((n_faces, width), dtype=bool)
    for f in range(n_faces):
        k = label_count[f]
        if k:
            labels_pad[f, :k] = cost_volume.labels[f]
            data_pad[f, :k] = cost_volume.costs[f]
            valid[f, :k] = True

    src, dst, rev = _directed_edges(graph, active)
    n_edges = len(src)
    iterations = 0
    if n_edges:
        # map_idx[e, t]: position of dst's t-th label inside src's label
        # list, or -1 when the src face lacks that view.
        map_idx = np.full((n_edges, width), -1, dtype=np.int64)
        for e in range(n_edges):
            s_labels = cost_volume.labels[src[e]]
            d_labels = cost_volume.labels[dst[e]]
            pos = np.searchsorted(s_labels, d_labels)
            pos_c = np.minimum(pos, len(s_labels) - 1)
            hit = s_labels[pos_c] == d_labels
            map_idx[e, : len(d_labels)] = np.where(hit, pos_c, -1)

        tvalid = valid[dst]
        messages = np.zeros((n_edges, width))
        incoming = np.zeros((n_faces, width))
        for iterations in range(1, iters + 1):
            b = data_pad[src] + incoming[src] - messages[rev]
            mstar = b.min(axis=1)
            gathered = np.take_along_axis(b, np.maximum(map_idx, 0), axis=1)
            gathered = np.where(map_idx >= 0, gathered, np.inf)
            m_new = np.minimum(mstar[:, None] + smoothness, gathered)
            m_new = np.where(tvalid, m_new, np.inf)
            m_new -= m_new.min(axis=1)[:, None]
            m_new = np.where(tvalid, m_new, 0.0)
            delta = np.abs(m_new - messages).max()
            messages = m_new
            incoming = np.zeros((n_faces, width))
            np.add.at(incoming, dst, messages)
            if delta < tol:
                break
    else:
        incoming = np.zeros((n_faces, width))

    beliefs = []
    for f in range(n_faces):
        k = label_count[f]
        beliefs.append(cost_volume.costs[f] + incoming[f, :k] if k else _EMPTY_COSTS)
    return BeliefVolume(labels=list(cost_volume.labels), costs=beliefs, iterations=iterations)


def total_energy(graph: AdjacencyGraph, cost_volume: CostVolume, smoothness: float,
                 labeling) -> float:
    """Energy of a full labeling: sum of data costs plus the weighted count
    of adjacency edges whose faces select different views.

    Args:
        labeling: Array-like of view ids, one per face; entries for faces
            with empty label sets are ignored.

    Raises:
        ValueError: A face is assigned a view id it does not list.
    """
    labeling = np.asarray(labeling)
    energy = 0.0
    for f in range(cost_volume.num_faces):
        labels = cost_volume.labels[f]
        if len(labels) == 0:
            continue
        pos = np.searchsorted(labels, labeling[f])
        if pos >= len(labels) or labels[pos] != labeling[f]:
            raise ValueError(f"face {f}: label {labeling[f]} is not listed")
        energy += float(cost_volume.costs[f][pos])
    for i, j in np.asarray(graph.edges):
        if len(cost_volume.labels[i]) and len(cost_volume.labels[j]):
            if labeling[i] != labeling[j]:
                energy += smoothness
    return energy


def extract_top_n(
    beliefs: BeliefVolume,
    top_n: int = DEFAULT_TOP_N,
    ratio: float = DEFAULT_RATIO,
) -> CandidateSet:
    """Rank labels by final cost and prune with the ratio test.

    Per face, labels are sorted by ascending cost (ties to the smaller view
    id) and truncated to ``top_n``. Scanning from the second candidate,
    candidate i and everything after it are dropped when
    (c_{i-1} + eps) / (c_i + eps) < ratio, with eps = 1e-6 guarding the
    zero-cost best label.
    """
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must be in [0, 1], got {ratio}")
    out_ids = []
    out_costs = []
    for labels, costs in zip(beliefs.labels, beliefs.costs):
        if len(labels) == 0:
            out_ids.append(_EMPTY_IDS)
            out_costs.append(_EMPTY_COSTS)
            continue
        order = np.lexsort((labels, costs))[:top_n]
        ids = labels[order]
        cs = costs[order]
        keep = len(ids)
        for i in range(1, len(ids)):
            if (cs[i - 1] + RATIO_EPSILON) / (cs[i] + RATIO_EPSILON) < ratio:
                keep = i
                break
        out_ids.append(ids[:keep].astype(np.int64))
        out_costs.append(cs[:keep])
    return CandidateSet(view_ids=out_ids, costs=out_costs)

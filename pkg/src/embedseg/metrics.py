"""Segmentation evaluation: Hungarian-matched overlap and boundary P/R/F.

Predicted and ground-truth objects (background label 0 excluded on both
sides) are compared by pairwise F-measure, matched one-to-one by maximizing
total F, and scored:

    P = sum_i |c_i  n  g(c_i)| / sum_i |c_i|
    R = sum_i |c_i  n  g(c_i)| / sum_j |g_j|
    F = 2 P R / (P + R)

Unmatched predictions and truths contribute only to denominators. Boundary
P/R/F uses the same assembly on object boundary pixels matched within a
small Euclidean dilation tolerance, restricted to the overlap matching. The
"percent 75" statistic is the share of ground-truth objects whose matched
prediction reaches overlap F >= 0.75. All 0/0 ratios are 0; percent 75 with
no ground-truth objects is vacuously 100.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MatchResult:
    """Injective mapping from predicted object ids to ground-truth ids."""

    mapping: dict[int, int]
    pair_f: dict[tuple[int, int], float]


@dataclass(frozen=True)
class EvalReport:
    overlap_p: float
    overlap_r: float
    overlap_f: float
    boundary_p: float
    boundary_r: float
    boundary_f: float
    percent75: float
    n_pred: int
    n_truth: int
    # pooled-aggregation raw counts: (numerator, precision denom, recall denom)
    overlap_counts: tuple[float, float, float] = (0.0, 0.0, 0.0)
    boundary_counts: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    percent75_hits: int = 0


def _f_measure(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0


def _object_ids(mask: np.ndarray) -> np.ndarray:
    ids = np.unique(mask)
    return ids[ids != 0]


def pairwise_f(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """F-measure between every predicted and ground-truth object.

    Returns (scores, pred_ids, truth_ids) where scores[i, j] compares
    pred_ids[i] with truth_ids[j].
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    pred_ids = _object_ids(pred)
    truth_ids = _object_ids(truth)
    if pred_ids.size == 0 or truth_ids.size == 0:
        return np.zeros((pred_ids.size, truth_ids.size)), pred_ids, truth_ids

    pi = np.searchsorted(pred_ids, pred.ravel())
    ti = np.searchsorted(truth_ids, truth.ravel())
    both = (pred.ravel() != 0) & (truth.ravel() != 0)
    inter = np.zeros((pred_ids.size, truth_ids.size), dtype=np.int64)
    np.add.at(inter, (pi[both], ti[both]), 1)

    psize = np.array([(pred == i).sum() for i in pred_ids], dtype=np.int64)
    tsize = np.array([(truth == j).sum() for j in truth_ids], dtype=np.int64)
    denom = psize[:, None] + tsize[None, :]
    return 2.0 * inter / denom, pred_ids, truth_ids


def hungarian_match(scores: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-total-score one-to-one assignment of a rectangular matrix.

    Returns (row, col) index pairs; pairs whose score is exactly zero are
    dropped, so padded rows/columns never produce spurious matches.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return []
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    nr, nc = scores.shape
    n = max(nr, nc)
    # Square cost matrix for minimization; padding costs 0 (= best score 0).
    cost = np.full((n, n), 0.0)
    cost[:nr, :nc] = -scores

    # Shortest augmenting path with potentials, 1-indexed with a dummy col 0.
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)     # p[j] = row matched to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    pairs = []
    for j in range(1, n + 1):
        i = p[j] - 1
        if i < nr and j - 1 < nc and scores[i, j - 1] > 0.0:
            pairs.append((i, j - 1))
    return sorted(pairs)


def match_objects(pred: np.ndarray, truth: np.ndarray) -> MatchResult:
    scores, pred_ids, truth_ids = pairwise_f(pred, truth)
    pairs = hungarian_match(scores)
    mapping = {int(pred_ids[i]): int(truth_ids[j]) for i, j in pairs}
    pair_f = {(int(pred_ids[i]), int(truth_ids[j])): float(scores[i, j]) for i, j in pairs}
    return MatchResult(mapping=mapping, pair_f=pair_f)


def overlap_prf(
    pred: np.ndarray, truth: np.ndarray, match: MatchResult | None = None
) -> tuple[float, float, float]:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if match is None:
        match = match_objects(pred, truth)
    inter = 0
    for cid, gid in match.mapping.items():
        inter += int(((pred == cid) & (truth == gid)).sum())
    p_den = int((pred != 0).sum())
    r_den = int((truth != 0).sum())
    p = inter / p_den if p_den else 0.0
    r = inter / r_den if r_den else 0.0
    return p, r, _f_measure(p, r)


def boundary_pixels(mask: np.ndarray, label: int) -> np.ndarray:
    """Pixels of a segment with a 4-neighbor of another label or on the edge."""
    seg = np.asarray(mask) == label
    pad = np.pad(seg, 1, constant_values=False)
    interior = (
        pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    )
    return seg & ~interior


def _dilate(mask: np.ndarray, tol: int) -> np.ndarray:
    """Union of translates within Euclidean distance tol."""
    if tol <= 0:
        return mask
    h, w = mask.shape
    out = mask.copy()
    for dy in range(-tol, tol + 1):
        for dx in range(-tol, tol + 1):
            if dy == 0 and dx == 0:
                continue
            if dy * dy + dx * dx > tol * tol:
                continue
            src = mask[
                max(0, -dy) : h - max(0, dy),
                max(0, -dx) : w - max(0, dx),
            ]
            out[
                max(0, dy) : h - max(0, -dy),
                max(0, dx) : w - max(0, -dx),
            ] |= src
    return out


def boundary_prf(
    pred: np.ndarray,
    truth: np.ndarray,
    tolerance: int = 1,
    match: MatchResult | None = None,
) -> tuple[float, float, float]:
    """Boundary P/R/F with true positives counted within a dilation tolerance."""
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if match is None:
        match = match_objects(pred, truth)

    p_num = r_num = 0
    for cid, gid in match.mapping.items():
        bp = boundary_pixels(pred, cid)
        bt = boundary_pixels(truth, gid)
        p_num += int((bp & _dilate(bt, tolerance)).sum())
        r_num += int((bt & _dilate(bp, tolerance)).sum())
    p_den = sum(int(boundary_pixels(pred, i).sum()) for i in _object_ids(pred))
    r_den = sum(int(boundary_pixels(truth, j).sum()) for j in _object_ids(truth))
    p = p_num / p_den if p_den else 0.0
    r = r_num / r_den if r_den else 0.0
    return p, r, _f_measure(p, r)


def percent_75(match: MatchResult, truth_count: int) -> float:
    """Share (0..100) of truth objects whose match reaches overlap F >= 0.75."""
    if truth_count == 0:
        return 100.0
    hits = sum(1 for f in match.pair_f.values() if f >= 0.75)
    return 100.0 * hits / truth_count


def evaluate_masks(pred: np.ndarray, truth: np.ndarray, boundary_tolerance: int = 1) -> EvalReport:
    """Full report for one image pair."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    match = match_objects(pred, truth)

    inter = sum(
        int(((pred == cid) & (truth == gid)).sum()) for cid, gid in match.mapping.items()
    )
    o_pden = int((pred != 0).sum())
    o_rden = int((truth != 0).sum())
    op = inter / o_pden if o_pden else 0.0
    orr = inter / o_rden if o_rden else 0.0

    bp_num = br_num = 0
    for cid, gid in match.mapping.items():
        pb = boundary_pixels(pred, cid)
        tb = boundary_pixels(truth, gid)
        bp_num += int((pb & _dilate(tb, boundary_tolerance)).sum())
        br_num += int((tb & _dilate(pb, boundary_tolerance)).sum())
    bp_den = sum(int(boundary_pixels(pred, i).sum()) for i in _object_ids(pred))
    br_den = sum(int(boundary_pixels(truth, j).sum()) for j in _object_ids(truth))
    bp = bp_num / bp_den if bp_den else 0.0
    br = br_num / br_den if br_den else 0.0

    truth_count = _object_ids(truth).size
    return EvalReport(
        overlap_p=op,
        overlap_r=orr,
        overlap_f=_f_measure(op, orr),
        boundary_p=bp,
        boundary_r=br,
        boundary_f=_f_measure(bp, br),
        percent75=percent_75(match, truth_count),
        n_pred=_object_ids(pred).size,
        n_truth=truth_count,
        overlap_counts=(float(inter), float(o_pden), float(o_rden)),
        boundary_counts=(float(bp_num), float(bp_den), float(br_num), float(br_den)),
        percent75_hits=sum(1 for f in match.pair_f.values() if f >= 0.75),
    )


def aggregate(reports: list[EvalReport], pooled: bool = False) -> EvalReport:
    """Combine per-image reports: unweighted means by default, or pooled counts."""
    if not reports:
        raise ValueError("nothing to aggregate")
    n_pred = sum(r.n_pred for r in reports)
    n_truth = sum(r.n_truth for r in reports)
    if not pooled:
        mean = lambda attr: float(np.mean([getattr(r, attr) for r in reports]))
        return EvalReport(
            overlap_p=mean("overlap_p"),
            overlap_r=mean("overlap_r"),
            overlap_f=mean("overlap_f"),
            boundary_p=mean("boundary_p"),
            boundary_r=mean("boundary_r"),
            boundary_f=mean("boundary_f"),
            percent75=mean("percent75"),
            n_pred=n_pred,
            n_truth=n_truth,
        )
    o_num = sum(r.overlap_counts[0] for r in reports)
    o_pden = sum(r.overlap_counts[1] for r in reports)
    o_rden = sum(r.overlap_counts[2] for r in reports)
    b_pnum = sum(r.boundary_counts[0] for r in reports)
    b_pden = sum(r.boundary_counts[1] for r in reports)
    b_rnum = sum(r.boundary_counts[2] for r in reports)
    b_rden = sum(r.boundary_counts[3] for r in reports)
    hits = sum(r.percent75_hits for r in reports)
    op = o_num / o_pden if o_pden else 0.0
    orr = o_num / o_rden if o_rden else 0.0
    bp = b_pnum / b_pden if b_pden else 0.0
    br = b_rnum / b_rden if b_rden else 0.0
    return EvalReport(
        overlap_p=op,
        overlap_r=orr,
        overlap_f=_f_measure(op, orr),
        boundary_p=bp,
        boundary_r=br,
        boundary_f=_f_measure(bp, br),
        percent75=100.0 * hits / n_truth if n_truth else 100.0,
        n_pred=n_pred,
        n_truth=n_truth,
    )

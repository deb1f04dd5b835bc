"""
Rank-k (CMC), mAP and mINP for cosine retrieval, plus a brute-force oracle.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from config.settings import RANKS
from utils.exceptions import ProtocolError, DegenerateEmbeddingError

logger = logging.getLogger('dsfad')

AP_FORMULA = "AP = (1/R) * sum over hits j of (hits within top r_j) / r_j; R = relevant gallery entries"


@dataclass
class RetrievalResult:
    """Metrics of one query/gallery evaluation."""
    cmc: np.ndarray  # cmc[k-1] = Rank-k accuracy
    mAP: float
    mINP: float
    ap: np.ndarray  # per valid query
    valid: np.ndarray  # queries with at least one relevant gallery entry
    rankings: list = field(default_factory=list)  # gallery indices per query after camera exclusion
    flagged: int = 0
    ranks: tuple = RANKS
    rank: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rank = {k: float(self.cmc[k - 1]) for k in self.ranks}


def normalize(features):
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateEmbeddingError("Cannot rank a zero-norm embedding")
    return features / norms


def cosine_similarity(query, gallery):
    return normalize(query) @ normalize(gallery).T


def rank_and_map(query, query_ids, query_cams, gallery, gallery_ids, gallery_cams, ranks=RANKS):
    """
    Rank the gallery for every query by cosine similarity and score the rankings.

    Gallery entries with the query's identity and camera are dropped from that
    query's ranking. Ties keep gallery order. Queries whose identity has no
    remaining gallery entry are flagged and left out of every average.

    Args:
        query (np.ndarray): [nq, d] query embeddings
        query_ids (np.ndarray): [nq] identity labels
        query_cams (np.ndarray): [nq] camera ids
        gallery (np.ndarray): [ng, d] gallery embeddings
        gallery_ids (np.ndarray): [ng] identity labels
        gallery_cams (np.ndarray): [ng] camera ids
        ranks (tuple): k values reported in RetrievalResult.rank

    Returns:
        RetrievalResult: CMC curve up to max(ranks), mAP, mINP and per-query AP
    """
    query_ids, query_cams = np.asarray(query_ids), np.asarray(query_cams)
    gallery_ids, gallery_cams = np.asarray(gallery_ids), np.asarray(gallery_cams)
    if len(gallery_ids) == 0:
        raise ProtocolError("Gallery is empty")

    sim = cosine_similarity(query, gallery)
    order = np.argsort(-sim, axis=1, kind='stable')
    ids = gallery_ids[order]
    cams = gallery_cams[order]
    same_id = ids == query_ids[:, None]
    keep = ~(same_id & (cams == query_cams[:, None]))
    hits = same_id & keep
    position = np.cumsum(keep, axis=1) - 1  # rank among the kept entries, 0-based

    num_relevant = hits.sum(axis=1)
    valid = num_relevant > 0
    flagged = int((~valid).sum())
    if flagged:
        logger.warning(f"{flagged} of {len(query_ids)} queries have no relevant gallery entry and are excluded")
    if not valid.any():
        raise ProtocolError("No query has a relevant gallery entry")

    hits, position, num_relevant = hits[valid], position[valid], num_relevant[valid]
    hit_count = np.cumsum(hits, axis=1)
    precision = np.where(hits, hit_count / (position + 1), 0.0)
    ap = precision.sum(axis=1) / num_relevant

    first_hit = np.where(hits, position, np.iinfo(np.int64).max).min(axis=1)
    last_hit = np.where(hits, position, -1).max(axis=1)
    inp = num_relevant / (last_hit + 1)

    max_rank = max(ranks)
    cmc = np.array([(first_hit < k).mean() for k in range(1, max_rank + 1)])
    rankings = [order[i][keep[i]] for i in range(len(query_ids))]
    return RetrievalResult(cmc=cmc, mAP=float(ap.mean()), mINP=float(inp.mean()), ap=ap, valid=valid,
                           rankings=rankings, flagged=flagged, ranks=tuple(ranks))


def brute_force_oracle(query, query_id, query_cam, gallery, gallery_ids, gallery_cams):
    """
    Definitional ranking and AP for a single query, one gallery entry at a time.

    Returns:
        tuple: (ranked gallery indices after camera exclusion, AP or None when nothing is relevant)
    """
    q = [float(v) for v in query]
    q_norm = sum(v * v for v in q) ** 0.5
    scored = []
    for index, entry in enumerate(gallery):
        if gallery_ids[index] == query_id and gallery_cams[index] == query_cam:
            continue
        g = [float(v) for v in entry]
        dot = sum(a * b for a, b in zip(q, g))
        scored.append((dot / (q_norm * sum(v * v for v in g) ** 0.5), index))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    ranking = [index for _, index in scored]

    relevant = [gallery_ids[index] == query_id for index in ranking]
    if not any(relevant):
        return ranking, None
    precisions = []
    found = 0
    for position, is_relevant in enumerate(relevant, start=1):
        if is_relevant:
            found += 1
            precisions.append(found / position)
    return ranking, sum(precisions) / len(precisions)

"""Query strategies: calibrated evidential sampling with diversity
relaxation, plus the Random / Entropy / CoreSet / BADGE baselines, and the
annotation bookkeeping with the 85% labeling cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .evidential import (
    UncertaintyTriple,
    alpha_from_logits,
    calibrated_uncertainty,
    posterior,
)
from .federation import MAX_ANNOTATION_RATIO, ClientState
from .nn import ModelParams, forward

__all__ = [
    "QuerySet",
    "RelaxationConfig",
    "ces_scores",
    "ablated_scores",
    "diversity_relaxation",
    "baseline_select",
    "annotate_query",
]

log = logging.getLogger(__name__)

STRATEGIES = ("feal", "random", "entropy_G", "entropy_L", "entropy_E", "coreset", "badge")


@dataclass(frozen=True)
class QuerySet:
    """Ordered sample indices chosen for annotation, with their scores."""

    indices: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("query indices must be distinct")
        if len(self.scores) != len(self.indices):
            raise ValueError("scores must align with indices")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class RelaxationConfig:
    similarity_threshold: float = 0.85
    min_neighbors: int = 5

    def __post_init__(self):
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ValueError("similarity threshold must be in (0, 1]")
        if self.min_neighbors < 1:
            raise ValueError("minimum neighbor size must be >= 1")


def ces_scores(
    features: np.ndarray, global_model: ModelParams, local_model: ModelParams
) -> list[UncertaintyTriple]:
    """Per-sample calibrated uncertainty from the global/local model pair."""
    if global_model.arch != local_model.arch:
        raise ValueError("global and local models must share an architecture")
    logits_g = forward(global_model, features).logits
    logits_l = forward(local_model, features).logits
    return [
        calibrated_uncertainty(alpha_from_logits(zg), alpha_from_logits(zl))
        for zg, zl in zip(logits_g, logits_l)
    ]


def ablated_scores(
    triples: list[UncertaintyTriple],
    use_epi: bool = True,
    use_ale_global: bool = True,
    use_ale_local: bool = True,
) -> np.ndarray:
    """Collapse uncertainty triples to scalar scores for a component subset.

    With the epistemic factor off the score is the sum of the enabled
    aleatoric terms; with it on and no aleatoric term it is the epistemic
    value alone; the full combination reproduces the calibrated product.
    """
    if not (use_epi or use_ale_global or use_ale_local):
        raise ValueError("at least one uncertainty component must be enabled")
    out = np.zeros(len(triples))
    for i, t in enumerate(triples):
        ale = (t.ale_global if use_ale_global else 0.0) + (t.ale_local if use_ale_local else 0.0)
        if not use_epi:
            out[i] = ale
        elif not (use_ale_global or use_ale_local):
            out[i] = t.epi_global
        else:
            out[i] = ale * t.epi_global
    return out


def _cosine_matrix(embeddings: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(embeddings, axis=1, keepdims=True)
    norms = np.where(norms == 0.0, 1.0, norms)
    unit = embeddings / norms
    return unit @ unit.T


def sort_by_score(indices, scores) -> list[int]:
    """Descending score, ties broken by ascending sample index."""
    return sorted(indices, key=lambda i: (-scores[i], i))


def diversity_relaxation(
    candidates: list[int],
    scores: dict[int, float],
    embeddings: dict[int, np.ndarray],
    budget: int,
    cfg: RelaxationConfig,
) -> QuerySet:
    """Select up to `budget` candidates, skipping those with >= n similar
    neighbors of which one is already queued. Candidates must arrive sorted
    by descending score. If the scan exhausts with open slots, the
    highest-score skipped candidates backfill.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    order = list(candidates)
    emb = np.stack([embeddings[i] for i in order]) if order else np.empty((0, 0))
    sim = _cosine_matrix(emb)
    pos = {idx: row for row, idx in enumerate(order)}

    selected: list[int] = []
    skipped: list[int] = []
    chosen = set()
    for idx in order:
        if len(selected) >= budget:
            break
        row = sim[pos[idx]]
        neighbors = {
            j for j in order if j != idx and row[pos[j]] >= cfg.similarity_threshold
        }
        if len(neighbors) >= cfg.min_neighbors and neighbors & chosen:
            skipped.append(idx)
            continue
        selected.append(idx)
        chosen.add(idx)
    for idx in skipped:
        if len(selected) >= budget:
            break
        selected.append(idx)
    return QuerySet(
        indices=tuple(selected), scores=tuple(scores[i] for i in selected)
    )


def _entropy(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    return float(-np.sum(p * np.log(p)))


def _kcenter_greedy(
    unlabeled: list[int], labeled: list[int], emb: dict[int, np.ndarray], budget: int
) -> list[int]:
    """Greedy k-center: repeatedly take the point farthest from the covered set."""
    centers = [emb[i] for i in labeled]
    pool = list(unlabeled)
    dists = {
        i: min(float(np.linalg.norm(emb[i] - c)) for c in centers) for i in pool
    }
    picked = []
    while pool and len(picked) < budget:
        best = max(pool, key=lambda i: (dists[i], -i))
        picked.append(best)
        pool.remove(best)
        for i in pool:
            dists[i] = min(dists[i], float(np.linalg.norm(emb[i] - emb[best])))
    return picked


def _badge_select(
    unlabeled: list[int],
    grad_emb: dict[int, np.ndarray],
    budget: int,
    rng: np.random.Generator,
) -> list[int]:
    """k-means++ seeding over gradient embeddings."""
    pool = list(unlabeled)
    first = pool[int(rng.integers(len(pool)))]
    picked = [first]
    d2 = {i: float(np.sum((grad_emb[i] - grad_emb[first]) ** 2)) for i in pool}
    while len(picked) < min(budget, len(pool)):
        total = sum(d2[i] for i in pool if i not in picked)
        if total <= 0.0:
            remaining = [i for i in pool if i not in picked]
            picked.extend(remaining[: budget - len(picked)])
            break
        r = rng.uniform(0.0, total)
        acc = 0.0
        nxt = None
        for i in pool:
            if i in picked:
                continue
            acc += d2[i]
            if acc >= r:
                nxt = i
                break
        nxt = nxt if nxt is not None else [i for i in pool if i not in picked][-1]
        picked.append(nxt)
        for i in pool:
            d2[i] = min(d2[i], float(np.sum((grad_emb[i] - grad_emb[nxt]) ** 2)))
    return picked


def baseline_select(
    strategy: str,
    client: ClientState,
    global_model: ModelParams,
    local_model: ModelParams,
    budget: int,
    seed: int,
) -> QuerySet:
    """Baseline query strategies over the client's unlabeled pool."""
    if strategy not in ("random", "entropy_G", "entropy_L", "entropy_E", "coreset", "badge"):
        raise ValueError(f"unknown strategy {strategy!r}")
    unlabeled = sorted(client.unlabeled)
    budget = min(budget, len(unlabeled))
    rng = np.random.default_rng(seed)

    if strategy == "random":
        picked = [unlabeled[i] for i in rng.choice(len(unlabeled), size=budget, replace=False)]
        return QuerySet(indices=tuple(picked), scores=tuple(0.0 for _ in picked))

    x = client.features[np.array(unlabeled, dtype=int)]
    out_g = forward(global_model, x)
    out_l = forward(local_model, x)

    if strategy.startswith("entropy"):
        scores = {}
        for row, idx in enumerate(unlabeled):
            score = 0.0
            if strategy in ("entropy_G", "entropy_E"):
                score += _entropy(posterior(alpha_from_logits(out_g.logits[row])))
            if strategy in ("entropy_L", "entropy_E"):
                score += _entropy(posterior(alpha_from_logits(out_l.logits[row])))
            scores[idx] = score
        picked = sort_by_score(unlabeled, scores)[:budget]
        return QuerySet(indices=tuple(picked), scores=tuple(scores[i] for i in picked))

    if strategy == "coreset":
        labeled = sorted(client.labeled)
        if not labeled:
            raise ValueError("coreset requires at least one labeled sample")
        all_idx = np.array(labeled + unlabeled, dtype=int)
        emb_rows = forward(local_model, client.features[all_idx]).embedding
        emb = {int(i): emb_rows[r] for r, i in enumerate(all_idx)}
        picked = _kcenter_greedy(unlabeled, labeled, emb, budget)
        return QuerySet(indices=tuple(picked), scores=tuple(0.0 for _ in picked))

    # badge: g = (posterior - onehot(argmax)) outer embedding, on the local model
    grad_emb = {}
    for row, idx in enumerate(unlabeled):
        probs = posterior(alpha_from_logits(out_l.logits[row]))
        resid = probs.copy()
        resid[int(np.argmax(probs))] -= 1.0
        grad_emb[idx] = np.outer(resid, out_l.embedding[row]).ravel()
    picked = _badge_select(unlabeled, grad_emb, budget, rng)
    return QuerySet(
        indices=tuple(picked),
        scores=tuple(float(np.linalg.norm(grad_emb[i])) for i in picked),
    )


def annotate_query(client: ClientState, q: QuerySet) -> ClientState:
    """Move queried indices from the unlabeled to the labeled set, enforcing
    the maximum annotation ratio; overflow is truncated in score order.
    """
    if not set(q.indices) <= client.unlabeled:
        raise RuntimeError("query contains indices outside the unlabeled set")
    n_total = len(client.labeled) + len(client.unlabeled)
    allowance = int(np.floor(MAX_ANNOTATION_RATIO * n_total)) - len(client.labeled)
    allowance = max(allowance, 0)
    if len(q) > allowance:
        log.warning(
            "client %d at annotation cap: truncating query from %d to %d",
            client.client_id,
            len(q),
            allowance,
        )
        q = QuerySet(indices=q.indices[:allowance], scores=q.scores[:allowance])
    client.labeled |= set(q.indices)
    client.unlabeled -= set(q.indices)
    return client

"""Exemplar rehearsal memory: herding selection, budgets, class means.

Exemplar lists are kept in herding order, so shrinking a class's allocation
is a prefix truncation and the greedy selection never has to be redone.
Budgets come in two flavors: a fixed cap per old class, or one shared total
split evenly across classes (remainder to the earliest-added classes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError

_NORM_EPS = 1e-8


@dataclass(frozen=True)
class PerClass:
    """At most ``m`` exemplars for every class."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ContractError(f"PerClass budget must be >= 1, got {self.m}")


@dataclass(frozen=True)
class Total:
    """A shared pool of ``m`` exemplars split across all classes."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ContractError(f"Total budget must be >= 1, got {self.m}")


Budget = PerClass | Total


def herd_select(features: np.ndarray, m: int) -> list[int]:
    """Greedy herding order: indices whose running mean best tracks the class mean.

    Step k picks the unpicked sample minimizing
    ``|| mean - (chosen_sum + f_x) / k ||``. Ties go to the lowest index.
    Features are expected row-normalized by the caller.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ContractError(f"herd_select: expected (N, D) features, got {features.shape}")
    n = features.shape[0]
    if not (1 <= m <= n):
        raise ContractError(f"herd_select: need 1 <= m <= {n}, got {m}")
    mu = features.mean(axis=0)
    picked: list[int] = []
    taken = np.zeros(n, dtype=bool)
    running = np.zeros_like(mu)
    for k in range(1, m + 1):
        cand = (running[None, :] + features) / k
        dist = np.linalg.norm(mu[None, :] - cand, axis=1)
        dist[taken] = np.inf
        # lowest index wins on ties, robust to last-ulp noise in the norms
        idx = int(np.flatnonzero(dist <= dist.min() + 1e-12)[0])
        picked.append(idx)
        taken[idx] = True
        running += features[idx]
    return picked


def _allocation(budget: Budget, class_ids: list[int]) -> dict[int, int]:
    if isinstance(budget, PerClass):
        return {c: budget.m for c in class_ids}
    n = len(class_ids)
    base, rem = divmod(budget.m, n)
    return {c: base + (1 if i < rem else 0) for i, c in enumerate(class_ids)}


class ExemplarMemory:
    """Per-class exemplar indices under a budget, in herding order."""

    def __init__(self, budget: Budget):
        self.budget = budget
        self.per_class: dict[int, list[int]] = {}
        self.means: dict[int, np.ndarray] = {}

    @property
    def class_ids(self) -> list[int]:
        return list(self.per_class)

    def total_stored(self) -> int:
        return sum(len(v) for v in self.per_class.values())

    def add_class(self, class_id: int, herding_order: list[int]) -> None:
        """Register a new class's full herding order, then re-apply budgets."""
        if class_id in self.per_class:
            raise ContractError(f"class {class_id} already stored")
        self.per_class[class_id] = [int(i) for i in herding_order]
        self.rebuild()

    def rebuild(self) -> None:
        """Truncate every class list to its current allocation (prefix cut)."""
        if not self.per_class:
            return
        alloc = _allocation(self.budget, self.class_ids)
        for c, order in self.per_class.items():
            self.per_class[c] = order[: alloc[c]]

    def class_means(self, embed_fn) -> dict[int, np.ndarray]:
        """Unit-norm mean of unit-norm exemplar embeddings, per class.

        ``embed_fn(indices)`` must return raw (n, D) embeddings computed with
        the current model; means therefore track representation drift.
        A zero mean (e.g. antipodal exemplars) is a numeric fault, not a
        silent zero vector.
        """
        means: dict[int, np.ndarray] = {}
        for c, indices in self.per_class.items():
            if not indices:
                raise ContractError(f"class {c} has no exemplars")
            emb = np.asarray(embed_fn(indices), dtype=np.float64)
            norms = np.linalg.norm(emb, axis=1, keepdims=True)
            if norms.min() <= _NORM_EPS:
                raise NumericError(f"class {c}: zero-norm exemplar embedding")
            mean = (emb / norms).mean(axis=0)
            mnorm = np.linalg.norm(mean)
            if mnorm <= _NORM_EPS:
                raise NumericError(f"class {c}: exemplar mean is (near-)zero")
            means[c] = mean / mnorm
        self.means = means
        return means

    def state(self) -> dict:
        kind = "per_class" if isinstance(self.budget, PerClass) else "total"
        return {
            "budget": {"kind": kind, "m": self.budget.m},
            "per_class": {str(c): list(v) for c, v in self.per_class.items()},
        }

    @classmethod
    def from_state(cls, state: dict) -> "ExemplarMemory":
        b = state["budget"]
        budget = PerClass(b["m"]) if b["kind"] == "per_class" else Total(b["m"])
        mem = cls(budget)
        for c, indices in state["per_class"].items():
            mem.per_class[int(c)] = [int(i) for i in indices]
        return mem

"""Per-composition confidence-feature queues.

Each queue keeps the K most confident (lowest prediction entropy)
historical features offered to it. Admission is strict: once full, a new
feature only displaces the worst entry when its entropy is strictly
lower, so equal-entropy ties favor the earlier arrival. The retained set
therefore always equals "K lowest (entropy, arrival) offers so far".
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field

import numpy as np

from .container import DataError, read_container, write_container


@dataclass(order=True)
class QueueEntry:
    entropy: float
    arrival: int
    feature: np.ndarray = field(compare=False)


class ConfidenceQueue:
    """Bounded queue sorted by (entropy, arrival) ascending."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[QueueEntry] = []
        self._mean: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def consider(self, h: float, f: np.ndarray, arrival: int) -> bool:
        """Offer (entropy, feature); returns True when admitted."""
        entry = QueueEntry(float(h), arrival, f)
        if not self.full:
            insort(self.entries, entry)
            self._mean = None
            return True
        if entry.entropy < self.entries[-1].entropy:
            self.entries.pop()
            insort(self.entries, entry)
            self._mean = None
            return True
        return False

    def visual_prototype(self) -> np.ndarray | None:
        """Mean of stored features over the current entry count, or None
        when empty. Not re-normalized; downstream refinement does that."""
        if not self.entries:
            return None
        if self._mean is None:
            self._mean = np.mean([e.feature for e in self.entries], axis=0)
        return self._mean


class QueueBank:
    """One queue per test composition, all starting empty. Maintains a
    dense (num_test, d) matrix of queue means plus a presence mask so the
    per-sample refinement stays vectorized."""

    def __init__(self, num_test: int, dim: int, capacity: int):
        self.queues = [ConfidenceQueue(capacity) for _ in range(num_test)]
        self.means = np.zeros((num_test, dim))
        self.present = np.zeros(num_test, dtype=bool)
        self._arrivals = 0

    def consider(self, comp_idx: int, h: float, f: np.ndarray) -> bool:
        arrival = self._arrivals
        self._arrivals += 1
        admitted = self.queues[comp_idx].consider(h, f, arrival)
        if admitted:
            self.means[comp_idx] = self.queues[comp_idx].visual_prototype()
            self.present[comp_idx] = True
        return admitted

    def __len__(self) -> int:
        return len(self.queues)


def save_queue_bank(path, qb: QueueBank) -> None:
    """Debug/checkpoint dump of queue state."""
    counts, entropies, arrivals, rows = [], [], [], []
    for q in qb.queues:
        counts.append(len(q))
        entropies.append([e.entropy for e in q.entries])
        arrivals.append([e.arrival for e in q.entries])
        rows.extend(e.feature for e in q.entries)
    dim = qb.means.shape[1]
    feats = np.stack(rows) if rows else np.zeros((0, dim))
    meta = {
        "capacity": qb.queues[0].capacity,
        "dim": int(dim),
        "counts": counts,
        "entropies": entropies,
        "arrivals": arrivals,
        "next_arrival": qb._arrivals,
    }
    write_container(path, "queues", meta, [("features", feats, "f4")])


def load_queue_bank(path) -> QueueBank:
    header, mats = read_container(path, expect_kind="queues")
    try:
        counts = [int(c) for c in header["counts"]]
        dim = int(header["dim"])
        capacity = int(header["capacity"])
        entropies = header["entropies"]
        arrivals = header["arrivals"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError("bad_header", f"{path}: {exc}") from exc
    feats = mats["features"]
    if feats.shape[0] != sum(counts):
        raise DataError("row_count_mismatch", f"{path}: feature rows vs counts")
    qb = QueueBank(len(counts), dim, capacity)
    row = 0
    for idx, count in enumerate(counts):
        q = qb.queues[idx]
        for j in range(count):
            insort(q.entries, QueueEntry(float(entropies[idx][j]),
                                         int(arrivals[idx][j]), feats[row]))
            row += 1
        if count:
            qb.means[idx] = q.visual_prototype()
            qb.present[idx] = True
    qb._arrivals = int(header.get("next_arrival", 0))
    return qb

"""Round-indexed key-value store with bounded retention.

Both roles park models, reports and metrics here. With a retention window
of w rounds, `clean_up(t)` evicts every round-tagged entry with
round <= t - w, so the store stays O(1) in the number of federated rounds.
Entries whose key has ``round=None`` (e.g. the learner spec, the running
ensemble) are round-independent and exempt from eviction.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import FedBoostError


@dataclass(frozen=True)
class StoreKey:
    origin: str
    round: int | None
    task: str
    name: str
    tags: tuple[str, ...] = ()

    def sort_key(self):
        return (self.origin, -1 if self.round is None else self.round,
                self.task, self.name, self.tags)


@dataclass(frozen=True)
class RetentionPolicy:
    """Keep the last `window` rounds; `window=None` means unbounded."""

    window: int | None = 2

    def __post_init__(self):
        if self.window is not None and self.window < 1:
            raise FedBoostError(f"retention window must be >= 1, got {self.window}")

    @property
    def unbounded(self) -> bool:
        return self.window is None


class RoundStore:
    def __init__(self, retention: RetentionPolicy = RetentionPolicy()):
        self.retention = retention
        self._entries: dict[StoreKey, bytes] = {}

    def put(self, key: StoreKey, value: bytes) -> None:
        self._entries[key] = bytes(value)  # last writer wins

    def get(self, key: StoreKey) -> bytes | None:
        return self._entries.get(key)

    def query(
        self,
        *,
        origin: str | None = None,
        round: int | None = None,
        task: str | None = None,
        name: str | None = None,
        tag: str | None = None,
    ) -> list[tuple[StoreKey, bytes]]:
        """All entries matching every given filter, sorted by key order."""
        hits = [
            (k, v)
            for k, v in self._entries.items()
            if (origin is None or k.origin == origin)
            and (round is None or k.round == round)
            and (task is None or k.task == task)
            and (name is None or k.name == name)
            and (tag is None or tag in k.tags)
        ]
        hits.sort(key=lambda kv: kv[0].sort_key())
        return hits

    def clean_up(self, current_round: int) -> int:
        """Evict round-tagged entries older than the retention window."""
        if self.retention.unbounded:
            return 0
        cutoff = current_round - self.retention.window
        stale = [k for k in self._entries if k.round is not None and k.round <= cutoff]
        for k in stale:
            del self._entries[k]
        return len(stale)

    def __len__(self) -> int:
        return len(self._entries)

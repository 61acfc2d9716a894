"""Packed storage for many variable-length per-problem vectors.

All rows live back to back in one flat value array indexed by a row-offset
array, the same layout as the row pointer / value pair of compressed row
storage.  Two mirrored copies of the value array ("space A" and "space B")
are kept with explicit modified flags, so code written against a dual-buffer
(host/device style) discipline runs unchanged here: mutate one space through
subviews, mark it modified, then sync the other space at a quiescent point.

The container cannot be resized after construction.  Distinct rows may be
read and written concurrently; mark_modified/sync must be serialized with
respect to all subview access.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.typing import NDArray

SPACES = ("a", "b")


class DivergentSpacesError(RuntimeError):
    """Both mirrored spaces were marked modified without an intervening sync."""


class PackedStorage:
    def __init__(self, rows: Sequence[Sequence[float]] | Sequence[NDArray], dtype=np.float64):
        lengths = [len(r) for r in rows]
        self.offsets = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lengths, out=self.offsets[1:])
        total = int(self.offsets[-1])
        self.values_a = np.empty(total, dtype=dtype)
        for r, row in enumerate(rows):
            self.values_a[self.offsets[r]: self.offsets[r + 1]] = row
        self.values_b = self.values_a.copy()
        self.modified_a = False
        self.modified_b = False

    @property
    def n_problems(self) -> int:
        return len(self.offsets) - 1

    def row_length(self, i: int) -> int:
        self._check_index(i)
        return int(self.offsets[i + 1] - self.offsets[i])

    def _check_index(self, i: int):
        if not (0 <= i < self.n_problems):
            raise IndexError(f"problem index {i} out of range ({self.n_problems} problems)")

    def _values(self, space: str) -> NDArray:
        if space == "a":
            return self.values_a
        if space == "b":
            return self.values_b
        raise ValueError(f"space must be 'a' or 'b', got {space!r}")

    def subview(self, i: int, space: str = "a") -> NDArray:
        """Mutable view over row i of the chosen space; writes land there only."""
        self._check_index(i)
        return self._values(space)[self.offsets[i]: self.offsets[i + 1]]

    def mark_modified(self, space: str):
        self._values(space)  # validates the name
        other = "b" if space == "a" else "a"
        if getattr(self, f"modified_{other}"):
            raise DivergentSpacesError(
                f"space {other!r} is already marked modified; spaces would diverge")
        setattr(self, f"modified_{space}", True)

    def sync(self, target_space: str):
        """Bring target_space up to date from the modified space, then clear flags.

        No-op when no space is marked modified or when the target itself is
        the modified one (it is already current).  Idempotent.
        """
        target = self._values(target_space)
        if self.modified_a and target_space == "b":
            target[:] = self.values_a
        elif self.modified_b and target_space == "a":
            target[:] = self.values_b
        else:
            return
        self.modified_a = False
        self.modified_b = False


def pack(rows: Sequence[Sequence[float]] | Sequence[NDArray], dtype=np.float64) -> PackedStorage:
    """Pack variable-length rows into one contiguous container."""
    return PackedStorage(rows, dtype=dtype)

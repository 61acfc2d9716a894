"""Permutation that moves Dirichlet-fixed DOFs to a contiguous trailing block.

Solver loops then run over the free-DOF prefix [0, n_free) only, while the
fixed DOFs remain addressable at the tail for force assembly and reactions.
DOF numbering is d = 3 * node + axis; all three DOFs of a boundary node are
fixed.  The partition is stable: free DOFs keep their relative order, and so
do fixed DOFs, which keeps serial accumulation order reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class DofMap:
    perm: NDArray[np.int64]       # old DOF index -> solver position
    inv_perm: NDArray[np.int64]   # solver position -> old DOF index
    n_free: int
    n_total: int

    def permute(self, v: NDArray) -> NDArray:
        """Reorder a DOF-indexed vector into solver order (free prefix first)."""
        v = np.asarray(v)
        if v.shape[0] != self.n_total:
            raise ValueError(f"expected vector of length {self.n_total}, got {v.shape[0]}")
        return v[self.inv_perm]

    def unpermute(self, v: NDArray) -> NDArray:
        """Inverse of permute: solver order back to original DOF order."""
        v = np.asarray(v)
        if v.shape[0] != self.n_total:
            raise ValueError(f"expected vector of length {self.n_total}, got {v.shape[0]}")
        return v[self.perm]


def build_dofmap(n_nodes: int, boundary_nodes: Iterable[int]) -> DofMap:
    """Stable partition of the 3*n_nodes DOFs into free prefix, fixed suffix."""
    boundary = sorted(set(int(b) for b in boundary_nodes))
    for b in boundary:
        if not (0 <= b < n_nodes):
            raise ValueError(f"boundary node {b} out of range ({n_nodes} nodes)")
    n_total = 3 * n_nodes
    fixed = np.zeros(n_total, dtype=bool)
    for b in boundary:
        fixed[3 * b: 3 * b + 3] = True
    inv_perm = np.concatenate([np.flatnonzero(~fixed), np.flatnonzero(fixed)])
    perm = np.empty(n_total, dtype=np.int64)
    perm[inv_perm] = np.arange(n_total)
    n_free = int((~fixed).sum())
    return DofMap(perm=perm, inv_perm=inv_perm, n_free=n_free, n_total=n_total)

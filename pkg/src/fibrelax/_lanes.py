"""Lane groups: cooperating workers that execute solver code in lockstep.

A lane group runs one function body on every lane; the body splits index
ranges with ``lane.chunk`` and separates algorithm lines with
``lane.barrier()``.  With a single lane the barrier is a no-op and the body
degenerates to plain serial execution, so the same solver code serves the
serial reference, the per-line-dispatch worker pool, and the lanes inside a
team.  Reductions and scatters are performed by the lead lane over shared
scratch arrays, which keeps results bit-identical for every lane count.
"""

from __future__ import annotations

import threading


class Lane:
    __slots__ = ("lane_id", "n_lanes", "lead", "shared", "_barrier")

    def __init__(self, lane_id: int, n_lanes: int, barrier, shared: dict):
        self.lane_id = lane_id
        self.n_lanes = n_lanes
        self.lead = lane_id == 0
        self.shared = shared
        self._barrier = barrier

    def chunk(self, n: int) -> tuple[int, int]:
        """Contiguous slice [lo, hi) of range(n) owned by this lane."""
        lo = self.lane_id * n // self.n_lanes
        hi = (self.lane_id + 1) * n // self.n_lanes
        return lo, hi

    def barrier(self):
        if self._barrier is not None:
            self._barrier.wait()


def run_lanes(n_lanes: int, body):
    """Execute body(lane) on n_lanes lockstep lanes; lane 0 runs on the caller.

    Any exception aborts the barrier so sibling lanes unblock, then the first
    exception is re-raised on the caller thread.
    """
    if n_lanes == 1:
        body(Lane(0, 1, None, {}))
        return

    barrier = threading.Barrier(n_lanes)
    shared: dict = {}
    errors: list[BaseException] = []

    def lane_main(lane_id: int):
        try:
            body(Lane(lane_id, n_lanes, barrier, shared))
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:
            errors.append(exc)
            barrier.abort()

    threads = [threading.Thread(target=lane_main, args=(i,), daemon=True)
               for i in range(1, n_lanes)]
    for t in threads:
        t.start()
    lane_main(0)
    for t in threads:
        t.join()
    if errors:
        raise errors[0]

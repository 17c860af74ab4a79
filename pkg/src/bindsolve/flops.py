"""Arithmetic-operation accounting for solver cost comparisons.

Counts are shape-derived (a D x n mat-vec books 2*D*n, an elementwise op over
D entries books D), accumulated per thread so parallel trials do not race.
They measure algorithmic work, not hardware cycles; wall time is recorded
separately by the bench layer.
"""
from __future__ import annotations

import threading

_state = threading.local()


def reset() -> None:
    _state.total = 0


def add(count: int) -> None:
    _state.total = getattr(_state, "total", 0) + int(count)


def total() -> int:
    return getattr(_state, "total", 0)


class counting:
    """Context manager returning the ops accumulated inside the block."""

    def __enter__(self) -> "counting":
        self._start = total()
        return self

    def __exit__(self, *exc) -> None:
        self.count = total() - self._start


def matvec(rows: int, cols: int) -> int:
    return 2 * rows * cols


def elementwise(size: int, nops: int = 1) -> int:
    return size * nops

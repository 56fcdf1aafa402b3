"""
Batched partition and quickselect over the rows of a shared matrix.

Rows must be independently shuffled beforehand: the comparison bits of
every partition step are opened to both servers, and only the shuffle
makes them independent of the original positions.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import SelectionError
from .compare import packed_compare
from .randomness import CorrelatedRandomness
from .sharing import ArithmeticShare, SharedMatrix, open_bits

logger = logging.getLogger(__name__)


@dataclass
class SelectionTask:
    """Rows to select from, the rank t_i wanted in each, and the source row ids."""
    rows: SharedMatrix
    targets: List[int]
    sources: Optional[List[int]] = None

    def __post_init__(self):
        if self.sources is None:
            self.sources = list(range(len(self.rows)))
        if not (len(self.rows) == len(self.targets) == len(self.sources)):
            raise SelectionError("rows, targets and sources must have equal length")
        for length, t in zip(self.rows.row_lengths, self.targets):
            if length == 0:
                raise SelectionError("cannot select from an empty row")
            if not 1 <= t <= length:
                raise SelectionError(f"target {t} out of range for a row of length {length}")


@dataclass
class SelectionResult:
    """Shares of the selected element keyed by source row id."""
    values: Dict[int, ArithmeticShare] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    def as_share(self, order: Optional[Sequence[int]] = None) -> ArithmeticShare:
        keys = sorted(self.values) if order is None else list(order)
        return ArithmeticShare.concat([self.values[k] for k in keys])


@dataclass
class PartitionStats:
    compare_calls: int = 0
    compared_pairs: int = 0


def mul_row_partition(
    rows: SharedMatrix,
    endpoint,
    randomness: CorrelatedRandomness,
    chunk_bits: int = 4,
    stats: Optional[PartitionStats] = None
) -> Tuple[List[int], SharedMatrix]:
    """
    Partition every row around its last element.

    Column step j compares element j of every row still longer than j + 1
    with that row's pivot in one packed comparison; the opened bits drive
    local swaps. Elements below the pivot end up left of it, the rest right.

    Args:
        rows: Pre-shuffled shared rows (ragged)
        endpoint: This party's endpoint
        randomness: Session dealer
        chunk_bits: Chunk width for the comparisons
        stats: Optional counter of comparison invocations

    Returns:
        Tuple of (pivot position per row, partitioned rows)
    """
    lengths = rows.row_lengths
    if any(length == 0 for length in lengths):
        raise SelectionError("cannot partition an empty row")
    payloads = [row.payload.copy() for row in rows.rows]
    boundary = [0] * len(payloads)
    longest = max(lengths) if lengths else 0
    template = rows.rows[0] if rows.rows else None

    with endpoint.protocol('partition'):
        for j in range(longest - 1):
            live = [i for i, length in enumerate(lengths) if j < length - 1]
            current = template.derive(np.array([payloads[i][j] for i in live], dtype=np.uint64))
            pivots = template.derive(np.array([payloads[i][-1] for i in live], dtype=np.uint64))
            below = packed_compare(current, pivots, endpoint, randomness, chunk_bits)
            bits = open_bits(below, endpoint, 'partition-bits')
            if stats is not None:
                stats.compare_calls += 1
                stats.compared_pairs += len(live)
            for i, bit in zip(live, bits):
                if bit:
                    k = boundary[i]
                    payloads[i][[k, j]] = payloads[i][[j, k]]
                    boundary[i] += 1
        for i, payload in enumerate(payloads):
            k = boundary[i]
            payload[[k, -1]] = payload[[-1, k]]

    partitioned = SharedMatrix([rows.rows[i].derive(p) for i, p in enumerate(payloads)])
    return boundary, partitioned


def mul_row_quick_select(
    task: SelectionTask,
    endpoint,
    randomness: CorrelatedRandomness,
    chunk_bits: int = 4,
    stats: Optional[PartitionStats] = None
) -> SelectionResult:
    """
    Shares of the t_i-th largest element of every row.

    Each level partitions all unresolved rows together. With q the pivot
    position and R the pivot plus everything right of it: if |R| = t the
    pivot is the answer; if |R| > t the search continues right of the pivot
    with the same t; otherwise it continues left with t - |R|. Equal values
    count separately, matching a descending sort.

    Returns:
        SelectionResult with exactly one share per source row
    """
    result = SelectionResult()
    rows = list(task.rows.rows)
    targets = list(task.targets)
    sources = list(task.sources)
    depth = 0
    while rows:
        pivots, partitioned = mul_row_partition(SharedMatrix(rows), endpoint, randomness, chunk_bits, stats)
        next_rows, next_targets, next_sources = [], [], []
        for row, q, t, source in zip(partitioned.rows, pivots, targets, sources):
            right = len(row) - q
            if right == t:
                result.values[source] = row[q]
            elif right > t:
                next_rows.append(row[q + 1:])
                next_targets.append(t)
                next_sources.append(source)
            else:
                next_rows.append(row[:q])
                next_targets.append(t - right)
                next_sources.append(source)
        depth += 1
        logger.debug(f"quickselect depth {depth}: {len(result)} resolved, {len(next_rows)} pending")
        rows, targets, sources = next_rows, next_targets, next_sources
    return result


def select_plain(row: Sequence[int], t: int) -> int:
    """t-th largest of a plaintext row, duplicates counted separately."""
    ordered = sorted(row, reverse=True)
    if not 1 <= t <= len(ordered):
        raise SelectionError(f"target {t} out of range for a row of length {len(ordered)}")
    return ordered[t - 1]

"""
First-fit packing of prioritized samples into capacity-bounded storage classes.
"""
from typing import List, Sequence

import numpy as np


def first_fit(
    order: np.ndarray, sizes: np.ndarray, capacity_mb: float, fill_gaps: bool = True
) -> np.ndarray:
    """
    Mask of the samples in ``order`` that first-fit into ``capacity_mb``.

    Samples are considered in order; each one is taken if it still fits. The leading
    run that fits is found with a cumulative sum, the gaps after it one sample at a
    time. With ``fill_gaps=False`` only the leading run is taken.
    """
    taken = np.zeros(len(order), dtype=bool)
    if len(order) == 0 or capacity_mb <= 0:
        return taken
    wanted = sizes[order]
    cumulative = np.cumsum(wanted)
    prefix = int(np.searchsorted(cumulative, capacity_mb, side="right"))
    taken[:prefix] = True
    if not fill_gaps:
        return taken
    gap = capacity_mb - (float(cumulative[prefix - 1]) if prefix else 0.0)

    start = prefix
    while start < len(wanted):
        fits = np.flatnonzero(wanted[start:] <= gap)
        if len(fits) == 0:
            break
        index = start + int(fits[0])
        taken[index] = True
        gap -= float(wanted[index])
        start = index + 1
    return taken


def pack_classes(
    order: np.ndarray, sizes: np.ndarray, capacities: Sequence[float], fill_gaps: bool = True
) -> List[np.ndarray]:
    """
    Place each sample of ``order`` in the first class that still has room.

    Returns one array per class, holding that class's samples in ``order`` order.
    Samples that fit nowhere are left out. Without ``fill_gaps`` each class takes
    the longest leading run of the remaining order that fits.
    """
    remaining = np.asarray(order, dtype=np.int64)
    placed = []
    for capacity in capacities:
        taken = first_fit(remaining, sizes, capacity, fill_gaps=fill_gaps)
        placed.append(remaining[taken])
        remaining = remaining[~taken]
    return placed

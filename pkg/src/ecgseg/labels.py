"""The six-symbol complex alphabet and label-array helpers.

Label sequences are plain ``numpy`` arrays of small integer codes, one per
sample. Code ``i`` is ``COMPLEXES[i]``.
"""
import numpy as np

COMPLEXES = ("P", "PQ", "QRS", "ST", "T", "ISO")
P, PQ, QRS, ST, T, ISO = range(6)

#: Row order used by printed metric tables.
REPORT_ORDER = ("QRS", "PQ", "P", "ISO", "ST", "T")

CODE = {name: i for i, name in enumerate(COMPLEXES)}


def encode(names):
    """Convert an iterable of complex names into a label array."""
    try:
        return np.array([CODE[n] for n in names], dtype=np.int8)
    except KeyError as exc:
        raise ValueError(f"unknown complex label {exc.args[0]!r}") from None


def decode(labels):
    return [COMPLEXES[int(c)] for c in labels]


def runs(labels):
    """Yield ``(code, start, stop)`` for each maximal run; ``stop`` is exclusive."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return
    edges = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], edges))
    stops = np.concatenate((edges, [labels.size]))
    for a, b in zip(starts, stops):
        yield int(labels[a]), int(a), int(b)


def binarize_qrs(labels):
    """Map labels to 1 for QRS samples and 0 for everything else."""
    return (np.asarray(labels) == QRS).astype(np.int8)

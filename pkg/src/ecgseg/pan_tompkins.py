"""Pan-Tompkins QRS detection with a QRS-duration extension.

Pipeline: linear-phase FIR band-pass (5-15 Hz), five-point derivative,
squaring, 150 ms moving-window integration. Every stage is a causal FIR with
a constant group delay, so an index ``i`` of the integrated signal maps back
to raw sample ``i - delay``.

QRS duration: for consecutive peaks ``R1, R2, R3`` the complex belonging to
``R2`` lies between the midpoints ``(R1+R2)/2`` and ``(R2+R3)/2``. On that
interval the threshold is ``mean + gamma * max`` of the integrated signal,
and the QRS is the contiguous above-threshold run containing ``R2``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import signal as sps

from .errors import InsufficientPeaksError

logger = logging.getLogger(__name__)

PASSBAND_HZ = (5.0, 15.0)
REFRACTORY_S = 0.200
MWI_WINDOW_S = 0.150
SEARCHBACK_FACTOR = 1.66
T_WAVE_WINDOW_S = 0.360
DEFAULT_GAMMA = 0.25


def _odd(n):
    n = int(round(n))
    return n if n % 2 else n + 1


def bandpass_taps(fs):
    """Hamming-window FIR band-pass with about 0.25 s of support."""
    numtaps = _odd(0.25 * fs)
    return sps.firwin(numtaps, PASSBAND_HZ, pass_zero=False, fs=fs)


DERIVATIVE_TAPS = np.array([2.0, 1.0, 0.0, -1.0, -2.0]) / 8.0


def mwi_length(fs):
    """Integration window in samples, forced odd for an integral delay."""
    n = int(round(MWI_WINDOW_S * fs))
    return n if n % 2 else n - 1


def chain_delays(fs):
    """``(bandpass_delay, total_delay)`` of the processing chain in samples."""
    bp = (bandpass_taps(fs).size - 1) // 2
    return bp, bp + (DERIVATIVE_TAPS.size - 1) // 2 + (mwi_length(fs) - 1) // 2


@dataclass(frozen=True)
class ProcessedSignal:
    """Integrated Pan-Tompkins signal.

    ``x_p[i]`` describes raw sample ``i - delay``, so ``x_p`` is ``delay``
    samples longer than the raw signal. ``bandpassed`` lags the raw signal by
    ``bandpass_delay`` samples; ``derivative`` by two more.
    """

    x_p: np.ndarray = field(repr=False)
    fs: int
    delay: int = 0
    bandpassed: np.ndarray | None = field(default=None, repr=False)
    derivative: np.ndarray | None = field(default=None, repr=False)
    bandpass_delay: int = 0

    def __post_init__(self):
        x = np.asarray(self.x_p, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("x_p must be 1-D")
        if np.any(x < 0):
            raise ValueError("x_p must be non-negative")
        object.__setattr__(self, "x_p", x)

    @property
    def n_raw(self) -> int:
        return self.x_p.size - self.delay


class QrsInterval(NamedTuple):
    r_peak: int
    onset: int
    offset: int


def pan_tompkins_process(signal, fs: int) -> ProcessedSignal:
    x = np.asarray(signal, dtype=np.float64)
    if fs <= 0:
        raise ValueError("sampling rate must be positive")
    if x.ndim != 1 or x.size <= fs:
        raise ValueError("signal must be longer than one second")
    bp_delay, delay = chain_delays(fs)
    # trailing zeros let every raw sample reach the integrator output
    x = np.concatenate((x, np.zeros(delay)))
    bp = sps.lfilter(bandpass_taps(fs), 1.0, x)
    deriv = sps.lfilter(DERIVATIVE_TAPS, 1.0, bp)
    squared = deriv * deriv
    # direct summation of non-negative terms keeps x_p >= 0 exactly
    x_p = np.convolve(squared, np.ones(mwi_length(fs)))[: x.size]
    return ProcessedSignal(x_p, int(fs), delay, bp, deriv, bp_delay)


def detect_r_peaks(processed: ProcessedSignal) -> np.ndarray:
    """Adaptive-threshold R-peak detection on the integrated signal.

    Signal and noise peak levels are tracked with the 1/8 running updates of
    the original detector; candidate peaks closer than 200 ms are merged, a
    search-back at half the threshold is made when no beat has been found
    for 1.66 times the running mean RR interval, and a candidate within
    360 ms of the previous beat whose maximal slope is under half of that
    beat's is taken to be a T wave. Returns raw-signal indices.
    """
    x = processed.x_p
    fs = processed.fs
    refractory = int(round(REFRACTORY_S * fs))
    if x.size == 0 or not np.any(x > 0):
        return np.zeros(0, dtype=np.int64)
    cands, _ = sps.find_peaks(x, distance=refractory)
    cands = cands[x[cands] > 0]
    if cands.size == 0:
        return np.zeros(0, dtype=np.int64)

    learn = x[: 2 * fs]
    spki = learn.max() / 3.0
    npki = learn.mean() / 2.0
    slope = np.abs(processed.derivative) if processed.derivative is not None else None
    width = mwi_length(fs)

    def max_slope(i):
        # derivative samples inside the integration window ending at i
        if slope is None:
            return np.inf
        return float(slope[max(0, i - width + 1) : i + 1].max())

    beats = []
    rr = []
    noise = []  # candidate indices rejected so far since the last beat

    def accept(i, level, searchback=False):
        nonlocal spki
        if searchback:
            spki = 0.25 * level + 0.75 * spki
        else:
            spki = 0.125 * level + 0.875 * spki
        if beats:
            rr.append(i - beats[-1])
            del rr[:-8]
        beats.append(i)
        noise.clear()

    def search_back(upto):
        thr2 = 0.5 * (npki + 0.25 * (spki - npki))
        if not beats or not rr or not noise:
            return
        limit = SEARCHBACK_FACTOR * np.mean(rr)
        if upto - beats[-1] <= limit:
            return
        pool = [i for i in noise if i - beats[-1] >= refractory and upto - i >= refractory]
        pool = [i for i in pool if x[i] > thr2]
        if pool:
            best = max(pool, key=lambda i: x[i])
            accept(best, x[best], searchback=True)

    for i in cands:
        search_back(i)
        thr1 = npki + 0.25 * (spki - npki)
        level = x[i]
        if level > thr1:
            if beats and i - beats[-1] < T_WAVE_WINDOW_S * fs and max_slope(i) < 0.5 * max_slope(beats[-1]):
                npki = 0.125 * level + 0.875 * npki
                noise.append(i)
                continue
            accept(i, level)
        else:
            npki = 0.125 * level + 0.875 * npki
            noise.append(i)
    search_back(x.size + refractory)

    return _refine(processed, np.array(sorted(beats), dtype=np.int64), refractory)


def _refine(processed, peaks, refractory):
    """Map integrated-signal peaks to raw indices at the band-pass extremum."""
    n = processed.n_raw
    bpd = processed.bandpass_delay
    out = []
    half = mwi_length(processed.fs) // 2
    for p in peaks:
        r = int(p) - processed.delay
        if processed.bandpassed is not None:
            lo = max(0, r - half)
            hi = min(n, r + half + 1)
            if hi > lo:
                r = lo + int(np.argmax(np.abs(processed.bandpassed[lo + bpd : hi + bpd])))
        r = min(max(r, 0), n - 1)
        if out and r - out[-1] < refractory:
            continue
        out.append(r)
    return np.array(out, dtype=np.int64)


def duration_threshold(segment, gamma: float) -> float:
    """``mean(segment) + gamma * max(segment)``."""
    segment = np.asarray(segment, dtype=np.float64)
    return float(segment.mean() + gamma * segment.max())


def qrs_duration(processed: ProcessedSignal, r_peaks, gamma: float = DEFAULT_GAMMA) -> list[QrsInterval]:
    """QRS onset and offset for every R peak (raw-signal indices).

    Each peak's search interval runs from just past the midpoint with the
    previous peak to the midpoint with the next one; the first and last
    peaks extend to the record edges.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    peaks = np.asarray(r_peaks, dtype=np.int64)
    if peaks.size < 3:
        raise InsufficientPeaksError(f"need at least 3 R peaks, got {peaks.size}")
    if np.any(np.diff(peaks) <= 0):
        raise ValueError("R peaks must be strictly increasing")
    x = processed.x_p
    d = processed.delay
    n_raw = processed.n_raw
    if peaks[0] < 0 or peaks[-1] >= n_raw:
        raise ValueError("R peak outside the signal")
    out = []
    for k, r in enumerate(peaks):
        lo = 0 if k == 0 else (int(peaks[k - 1]) + int(r)) // 2 + 1
        hi = n_raw - 1 if k == peaks.size - 1 else (int(r) + int(peaks[k + 1])) // 2
        r = int(r)
        seg = x[lo + d : hi + d + 1]
        if seg.size == 0:
            out.append(QrsInterval(r, r, r))
            continue
        thr = duration_threshold(seg, gamma)
        c = r - lo
        if seg[c] < thr:
            logger.warning("threshold %.4g exceeds x_p at R peak %d; degenerate interval", thr, r)
            out.append(QrsInterval(r, r, r))
            continue
        a = c
        while a > 0 and seg[a - 1] >= thr:
            a -= 1
        b = c
        while b < seg.size - 1 and seg[b + 1] >= thr:
            b += 1
        out.append(QrsInterval(r, lo + a, lo + b))
    return out


def intervals_to_labels(intervals, n_samples: int) -> np.ndarray:
    """Binary QRS mask: 1 inside any interval, 0 elsewhere."""
    out = np.zeros(n_samples, dtype=np.int8)
    for iv in intervals:
        out[iv.onset : iv.offset + 1] = 1
    return out


def segment_qrs(signal, fs: int, gamma: float = DEFAULT_GAMMA):
    """Run the full baseline: returns ``(intervals, qrs_mask)``."""
    processed = pan_tompkins_process(signal, fs)
    peaks = detect_r_peaks(processed)
    intervals = qrs_duration(processed, peaks, gamma)
    return intervals, intervals_to_labels(intervals, len(signal))


def write_interval_csv(path, intervals) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r_peak", "onset", "offset"])
        for iv in intervals:
            w.writerow([iv.r_peak, iv.onset, iv.offset])


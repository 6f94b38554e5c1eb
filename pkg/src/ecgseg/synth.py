"""Synthetic ECG with exact per-sample ground truth.

A beat is laid out as P, PQ, QRS, ST, T followed by ISO baseline up to the
next beat. Waves are Gaussian bumps confined to their labelled support; the
QRS is a Q-R-S triple of narrow Gaussians. Labels are produced by
:func:`ecgseg.signal_io.derive_labels` from the generated wave boundaries, so
they follow exactly the same gap rules as real annotations.

Randomness comes from ``numpy.random.Generator(PCG64(seed))``; the draw order
is fixed (per beat: RR jitter, then P presence; afterwards the noise vector),
so a seed pins the output bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_io import EcgRecord, WaveBoundary, derive_labels


@dataclass(frozen=True)
class SynthParams:
    beats: int = 10
    fs: int = 250
    rr_ms: float = 1000.0
    noise_sigma: float = 0.0
    p_absent_prob: float = 0.0
    seed: int = 0
    rr_jitter: float = 0.05  # uniform relative jitter of each RR interval
    p_ms: float = 80.0
    pq_ms: float = 40.0
    qrs_ms: float = 80.0
    st_ms: float = 80.0
    t_ms: float = 160.0
    p_amp: float = 0.15
    qrs_amp: float = 1.0
    t_amp: float = 0.3
    lead_in_ms: float = 200.0

    def __post_init__(self):
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if self.beats < 1:
            raise ValueError("need at least one beat")
        if not 0.0 <= self.p_absent_prob <= 1.0:
            raise ValueError("p_absent_prob must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0.0 <= self.rr_jitter < 1.0:
            raise ValueError("rr_jitter must lie in [0, 1)")
        if self._samples(self.rr_ms * (1 - self.rr_jitter)) <= sum(self._durations()):
            raise ValueError("RR interval too short for the configured wave durations")

    def _samples(self, ms):
        return int(round(ms * self.fs / 1000.0))

    def _durations(self):
        return [self._samples(ms) for ms in (self.p_ms, self.pq_ms, self.qrs_ms, self.st_ms, self.t_ms)]


def _bump(n, center, width):
    t = np.arange(n, dtype=np.float64)
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def _qrs_shape(n, amp):
    return amp * (
        -0.10 * _bump(n, 0.20 * (n - 1), 0.07 * n)
        + 1.00 * _bump(n, 0.45 * (n - 1), 0.09 * n)
        - 0.25 * _bump(n, 0.72 * (n - 1), 0.08 * n)
    )


def generate(params: SynthParams, record_id: str = "synth"):
    """Return ``(EcgRecord, labels)`` for the given parameters."""
    record, labels, _ = generate_with_waves(params, record_id)
    return record, labels


def generate_with_waves(params: SynthParams, record_id: str = "synth"):
    """Like :func:`generate`, also returning the wave boundaries."""
    rng = np.random.Generator(np.random.PCG64(params.seed))
    d_p, d_pq, d_qrs, d_st, d_t = params._durations()
    beat_len = d_p + d_pq + d_qrs + d_st + d_t

    layout = []
    pos = params._samples(params.lead_in_ms)
    for _ in range(params.beats):
        rr = params._samples(params.rr_ms * (1.0 + params.rr_jitter * rng.uniform(-1.0, 1.0)))
        has_p = not rng.random() < params.p_absent_prob
        layout.append((pos, has_p))
        pos += rr
    n = layout[-1][0] + beat_len + params._samples(params.lead_in_ms)

    x = np.zeros(n)
    waves = []
    for start, has_p in layout:
        p_on = start
        qrs_on = p_on + d_p + d_pq
        t_on = qrs_on + d_qrs + d_st
        if has_p:
            x[p_on : p_on + d_p] += params.p_amp * _bump(d_p, (d_p - 1) / 2, d_p / 6)
            waves.append(WaveBoundary("P", p_on, p_on + d_p - 1))
        x[qrs_on : qrs_on + d_qrs] += _qrs_shape(d_qrs, params.qrs_amp)
        waves.append(WaveBoundary("QRS", qrs_on, qrs_on + d_qrs - 1))
        x[t_on : t_on + d_t] += params.t_amp * _bump(d_t, (d_t - 1) / 2, d_t / 6)
        waves.append(WaveBoundary("T", t_on, t_on + d_t - 1))

    if params.noise_sigma > 0:
        x = x + rng.normal(0.0, params.noise_sigma, size=n)
    labels = derive_labels(waves, n)
    return EcgRecord(record_id, params.fs, x), labels, waves


def r_peak_positions(params: SynthParams, waves) -> np.ndarray:
    """Sample index of the R apex inside each generated QRS."""
    d_qrs = params._durations()[2]
    apex = int(np.argmax(_qrs_shape(d_qrs, 1.0)))
    return np.array([w.onset + apex for w in waves if w.wave_kind == "QRS"], dtype=np.int64)

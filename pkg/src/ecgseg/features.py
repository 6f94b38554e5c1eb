"""Mexican-hat (Ricker) wavelet features.

Each sample of a signal is described by its wavelet responses at dyadic
scales ``2**j``; the default ``j = 2, 3, 4`` gives scales 4, 8 and 16 samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._backend import correlate_kernel
from .errors import FormatError

DEFAULT_SCALE_EXPONENTS = (2, 3, 4)

#: Half-width of the kernel support in units of the scale.
SUPPORT_WIDTH = 8

_RICKER_CONST = 2.0 / (math.sqrt(3.0) * math.pi ** 0.25)


@dataclass(frozen=True)
class WaveletKernel:
    scale_exponent: int
    taps: np.ndarray  # taps[k] is the value at n = k - half_width

    @property
    def half_width(self) -> int:
        return self.taps.size // 2

    @property
    def scale(self) -> int:
        return 2 ** self.scale_exponent

    def tap(self, n: int) -> float:
        return float(self.taps[n + self.half_width])


def mexican_hat_kernel(j: int, support_width: int = SUPPORT_WIDTH) -> WaveletKernel:
    """Sampled Ricker wavelet at scale ``s = 2**j``.

    ``tap(n) = s**-0.5 * 2 / (sqrt(3) * pi**0.25) * (1 - (n/s)**2) * exp(-(n/s)**2 / 2)``
    for integer ``n`` in ``[-support_width*s, support_width*s]``.
    """
    if int(j) != j or j < 1:
        raise ValueError(f"scale exponent must be an integer >= 1, got {j}")
    s = 2 ** int(j)
    half = support_width * s
    t = np.arange(-half, half + 1, dtype=np.float64) / s
    t2 = t * t
    taps = (_RICKER_CONST / math.sqrt(s)) * (1.0 - t2) * np.exp(-0.5 * t2)
    taps.setflags(write=False)
    return WaveletKernel(int(j), taps)


def cwt(signal, scale_exponents=DEFAULT_SCALE_EXPONENTS, zscore: bool = False) -> np.ndarray:
    """Mexican-hat wavelet transform, one column per scale exponent.

    ``out[n, k] = sum_m signal[m] * tap_k(m - n)`` with zeros outside the
    signal. Returns an ``(len(signal), len(scale_exponents))`` float array.
    With ``zscore`` each column is standardized to zero mean, unit variance.
    """
    x = np.ascontiguousarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("signal must be a nonempty 1-D sequence")
    if len(scale_exponents) == 0:
        raise ValueError("at least one scale exponent is required")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite values")
    out = np.empty((x.size, len(scale_exponents)), dtype=np.float64)
    for k, j in enumerate(scale_exponents):
        out[:, k] = correlate_kernel(x, mexican_hat_kernel(j).taps)
    if zscore:
        sd = out.std(axis=0)
        sd[sd == 0] = 1.0
        out = (out - out.mean(axis=0)) / sd
    return out


def feature_names(scale_exponents=DEFAULT_SCALE_EXPONENTS):
    return [f"w{2 ** j}" for j in scale_exponents]


def write_feature_csv(path, features, scale_exponents=DEFAULT_SCALE_EXPONENTS) -> None:
    features = np.asarray(features)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + feature_names(scale_exponents))
        for i, row in enumerate(features):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_feature_csv(path):
    """Return ``(features, scale_exponents)`` from a feature dump."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "index":
        raise FormatError(f"{path}: missing feature header")
    try:
        exps = tuple(int(math.log2(int(name[1:]))) for name in rows[0][1:])
        data = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if data.size and data.shape[1] != len(exps):
        raise FormatError(f"{path}: column count does not match header")
    return data.reshape(-1, len(exps)), exps

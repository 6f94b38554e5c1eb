"""Reading ECG records and annotations, and turning wave boundaries into labels.

Two input routes are supported:

* WFDB-lite: a text header, a format 212 or 16 signal file and a binary
  annotation file, as distributed with the QT Database.
* Plain-text CSV: ``index,value`` for signals and ``index,label`` for labels.

Only the first channel of a record is ever read.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import labels as lab
from .errors import FormatError, StructureError, TruncationError, UnsupportedFormatError

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = (212, 16)

# WFDB annotation codes (ecgcodes.h)
WFON = 39
WFOFF = 40
PWAVE = 24
TWAVE = 27
NORMAL = 1
ACMAX = 49
SKIP = 59
NUM = 60
SUB = 61
CHN = 62
AUX = 63
#: codes for which ``isqrs`` is true in the WFDB library
BEAT_CODES = frozenset(list(range(1, 14)) + [25, 30, 34, 35, 38, 41])

DEFAULT_GAIN = 200.0


@dataclass(frozen=True)
class EcgRecord:
    """A single-channel ECG signal in physical units."""

    record_id: str
    sampling_rate_hz: int
    samples: np.ndarray = field(repr=False)
    source_channel: int = 0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("record samples must be a nonempty 1-D sequence")
        if int(self.sampling_rate_hz) != self.sampling_rate_hz or self.sampling_rate_hz <= 0:
            raise ValueError(f"sampling rate must be a positive integer, got {self.sampling_rate_hz}")
        if self.source_channel != 0:
            raise ValueError("only channel 0 is supported")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sampling_rate_hz", int(self.sampling_rate_hz))

    def __len__(self):
        return self.samples.size


class WaveBoundary(NamedTuple):
    wave_kind: str  # "P", "QRS" or "T"
    onset: int
    offset: int


class Annotation(NamedTuple):
    time: int
    code: int


@dataclass(frozen=True)
class SignalSpec:
    file_name: str
    fmt: int
    byte_offset: int = 0
    gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    adc_zero: int = 0
    description: str = ""


@dataclass(frozen=True)
class HeaderInfo:
    record_name: str
    n_signals: int
    sampling_rate_hz: float
    n_samples: int
    signals: tuple


# --------------------------------------------------------------------------- #
# Header
# --------------------------------------------------------------------------- #

_RECORD_LINE = re.compile(
    r"^(?P<name>[^\s/]+)(?:/(?P<nseg>\d+))?\s+(?P<nsig>\d+)"
    r"\s+(?P<fs>[0-9.eE+-]+)(?:/[0-9.eE+-]+)?(?:\([^)]*\))?"
    r"\s+(?P<nsamp>\d+)(?:\s+.*)?$"
)
_FORMAT_FIELD = re.compile(r"^(?P<fmt>\d+)(?:x\d+)?(?::\d+)?(?:\+(?P<offset>\d+))?$")
_GAIN_FIELD = re.compile(
    r"^(?P<gain>[0-9.eE+-]+)(?:\((?P<baseline>-?\d+)\))?(?:/(?P<units>\S+))?$"
)


def parse_wfdb_header(header_text: str) -> HeaderInfo:
    """Parse a WFDB ``.hea`` header.

    Comment lines (``#``) and blank lines are ignored. The record line must
    carry the record name, signal count, sampling frequency and sample count.

    Raises
    ------
    FormatError
        If a line does not follow the header grammar; the message carries the
        1-based line number.
    UnsupportedFormatError
        If any signal uses a storage format other than 212 or 16.
    """
    if not header_text or not header_text.strip():
        raise FormatError("empty header")
    lines = [
        (i, ln.strip())
        for i, ln in enumerate(header_text.splitlines(), start=1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    lineno, first = lines[0]
    m = _RECORD_LINE.match(first)
    if m is None:
        raise FormatError(f"record line does not match 'name nsig fs nsamples': {first!r}", lineno)
    if m.group("nseg"):
        raise FormatError("multi-segment records are not supported", lineno)
    nsig = int(m.group("nsig"))
    try:
        fs = float(m.group("fs"))
    except ValueError:
        raise FormatError(f"bad sampling frequency {m.group('fs')!r}", lineno) from None
    if fs <= 0:
        raise FormatError("sampling frequency must be positive", lineno)
    if nsig < 1:
        raise FormatError("record declares no signals", lineno)

    signals = []
    if len(lines) - 1 < nsig:
        raise FormatError(
            f"header declares {nsig} signals but has {len(lines) - 1} signal lines",
            lines[-1][0] + 1,
        )
    for lineno, text in lines[1 : 1 + nsig]:
        signals.append(_parse_signal_line(text, lineno))
    return HeaderInfo(
        record_name=m.group("name"),
        n_signals=nsig,
        sampling_rate_hz=fs,
        n_samples=int(m.group("nsamp")),
        signals=tuple(signals),
    )


def _parse_signal_line(text, lineno):
    parts = text.split(None, 8)
    if len(parts) < 2:
        raise FormatError(f"signal line needs 'file format': {text!r}", lineno)
    fm = _FORMAT_FIELD.match(parts[1])
    if fm is None:
        raise FormatError(f"bad format field {parts[1]!r}", lineno)
    fmt = int(fm.group("fmt"))
    if fmt not in SUPPORTED_FORMATS:
        raise UnsupportedFormatError(fmt, lineno)
    spec = {"file_name": parts[0], "fmt": fmt, "byte_offset": int(fm.group("offset") or 0)}
    baseline = None
    if len(parts) > 2:
        gm = _GAIN_FIELD.match(parts[2])
        if gm is None:
            raise FormatError(f"bad gain field {parts[2]!r}", lineno)
        gain = float(gm.group("gain"))
        spec["gain"] = gain if gain != 0 else DEFAULT_GAIN
        if gm.group("baseline") is not None:
            baseline = int(gm.group("baseline"))
        if gm.group("units"):
            spec["units"] = gm.group("units")
    try:
        if len(parts) > 4:
            spec["adc_zero"] = int(parts[4])
    except ValueError:
        raise FormatError(f"bad ADC zero {parts[4]!r}", lineno) from None
    spec["baseline"] = spec.get("adc_zero", 0) if baseline is None else baseline
    if len(parts) > 8:
        spec["description"] = parts[8]
    return SignalSpec(**spec)


# --------------------------------------------------------------------------- #
# Signal formats
# --------------------------------------------------------------------------- #

def decode_format212(data: bytes, n_samples: int) -> np.ndarray:
    """Unpack ``n_samples`` 12-bit two's-complement values from format 212 bytes.

    Every 3-byte group holds two samples: the first is the low nibble of the
    middle byte followed by byte 0; the second is the high nibble of the
    middle byte followed by byte 2.
    """
    need = math.ceil(n_samples * 3 / 2)
    if len(data) < need:
        raise TruncationError("format 212 stream truncated", need, len(data))
    raw = np.frombuffer(bytes(data[:need]), dtype=np.uint8)
    if raw.size % 3:
        raw = np.concatenate((raw, np.zeros(3 - raw.size % 3, dtype=np.uint8)))
    b = raw.reshape(-1, 3).astype(np.int32)
    out = np.empty(b.shape[0] * 2, dtype=np.int32)
    out[0::2] = ((b[:, 1] & 0x0F) << 8) | b[:, 0]
    out[1::2] = ((b[:, 1] & 0xF0) << 4) | b[:, 2]
    out = out[:n_samples]
    out[out >= 2048] -= 4096
    return out


def decode_format16(data: bytes, n_samples: int) -> np.ndarray:
    need = 2 * n_samples
    if len(data) < need:
        raise TruncationError("format 16 stream truncated", need, len(data))
    return np.frombuffer(bytes(data[:need]), dtype="<i2").astype(np.int32)


_DECODERS = {212: decode_format212, 16: decode_format16}


def read_wfdb_record(stem: str, channel: int = 0) -> EcgRecord:
    """Read channel 0 of the record ``stem`` (path without ``.hea``)."""
    if channel != 0:
        raise ValueError("only channel 0 is supported")
    with open(stem + ".hea", encoding="utf-8") as fh:
        header = parse_wfdb_header(fh.read())
    fs = header.sampling_rate_hz
    if fs != int(fs):
        raise FormatError(f"non-integer sampling frequency {fs} is not supported")
    target = header.signals[channel]
    # signals stored in the same file are interleaved frame by frame
    group = [s for s in header.signals if s.file_name == target.file_name]
    if any(s.fmt != target.fmt for s in group):
        raise UnsupportedFormatError(f"mixed formats in {target.file_name}")
    column = group.index(target)
    path = os.path.join(os.path.dirname(stem), target.file_name)
    with open(path, "rb") as fh:
        data = fh.read()[target.byte_offset :]
    digital = _DECODERS[target.fmt](data, header.n_samples * len(group))
    digital = digital.reshape(header.n_samples, len(group))[:, column]
    physical = (digital - target.baseline) / target.gain
    return EcgRecord(header.record_name, int(fs), physical, 0)


# --------------------------------------------------------------------------- #
# Annotations
# --------------------------------------------------------------------------- #

def parse_wfdb_annotations(data: bytes) -> list[Annotation]:
    """Decode a WFDB (MIT format) annotation stream into ``(time, code)`` pairs.

    Each little-endian 16-bit word carries a 6-bit code and a 10-bit time
    delta. ``SKIP`` words are followed by a 32-bit interval stored high word
    first; ``NUM``/``SUB``/``CHN`` modify the previous entry and are ignored;
    ``AUX`` words are followed by an even-padded byte string that is skipped.
    A zero word ends the stream.
    """
    data = bytes(data)
    out = []
    time = 0
    i = 0
    n = len(data)
    while i + 1 < n:
        word = data[i] | (data[i + 1] << 8)
        code, delta = word >> 10, word & 0x3FF
        i += 2
        if code == 0 and delta == 0:
            return out
        if code == SKIP:
            if i + 4 > n:
                raise TruncationError("SKIP interval truncated", i + 4, n)
            hi = data[i] | (data[i + 1] << 8)
            lo = data[i + 2] | (data[i + 3] << 8)
            interval = (hi << 16) | lo
            if interval >= 1 << 31:
                interval -= 1 << 32
            time += interval
            i += 4
        elif code in (NUM, SUB, CHN):
            continue
        elif code == AUX:
            i += delta + (delta & 1)
        else:
            time += delta
            if 1 <= code <= ACMAX:
                out.append(Annotation(time, code))
            else:
                logger.warning("skipping annotation with unknown code %d at sample %d", code, time)
    raise TruncationError("annotation stream has no end marker")


def read_wfdb_annotations(path: str) -> list[Annotation]:
    with open(path, "rb") as fh:
        return parse_wfdb_annotations(fh.read())


def _wave_kind(code):
    if code == PWAVE:
        return "P"
    if code == TWAVE:
        return "T"
    if code in BEAT_CODES:
        return "QRS"
    return None


def annotations_to_waves(entries: Sequence[Annotation], strict: bool = True) -> list[WaveBoundary]:
    """Group ``(`` label ``)`` annotation triples into wave boundaries.

    Brackets around labels other than P, T or a beat (U waves, for
    instance) are consumed silently. With ``strict=False`` malformed groups
    are logged and dropped instead of raising.
    """
    waves = []
    onset = None
    kind = None
    label_seen = False

    def fail(message, time):
        if strict:
            raise StructureError(message, time)
        logger.warning("%s at sample %d; group dropped", message, time)

    for time, code in entries:
        if code == WFON:
            if onset is not None:
                fail("wave onset without matching offset", onset)
            onset, kind, label_seen = time, None, False
        elif code == WFOFF:
            if onset is None:
                fail("wave offset without matching onset", time)
                continue
            if kind is not None:
                w = WaveBoundary(kind, onset, time)
                if waves and w.onset <= waves[-1].offset:
                    fail("overlapping waves", w.onset)
                else:
                    waves.append(w)
            onset, kind = None, None
        else:
            k = _wave_kind(code)
            if code not in (PWAVE, TWAVE, 29) and k is None:
                continue  # rhythm, notes and the like
            if onset is None:
                if k is not None:
                    fail(f"{k} label without onset/offset", time)
                continue
            if label_seen:
                fail("two wave labels inside one onset/offset pair", time)
                onset = None
                continue
            kind, label_seen = k, True
    if onset is not None:
        fail("wave onset without matching offset", onset)
    return waves


# --------------------------------------------------------------------------- #
# Labels
# --------------------------------------------------------------------------- #

def derive_labels(waves: Sequence[WaveBoundary], n_samples: int) -> np.ndarray:
    """Label every sample with one of the six complexes.

    Samples inside a wave take its label. The gap between a P offset and the
    following QRS onset is PQ, the gap between a QRS offset and the following
    T onset is ST, and every other sample is ISO. A QRS without a preceding P
    therefore has ISO right up to its onset.
    """
    out = np.full(n_samples, lab.ISO, dtype=np.int8)
    prev = None
    for w in waves:
        if w.wave_kind not in ("P", "QRS", "T"):
            raise StructureError(f"unknown wave kind {w.wave_kind!r}", w.onset)
        if not 0 <= w.onset <= w.offset < n_samples:
            raise StructureError(f"{w.wave_kind} wave [{w.onset}, {w.offset}] outside record", w.onset)
        if prev is not None:
            if w.onset <= prev.offset:
                raise StructureError("waves out of order or overlapping", w.onset)
            gap = None
            if prev.wave_kind == "P" and w.wave_kind == "QRS":
                gap = lab.PQ
            elif prev.wave_kind == "QRS" and w.wave_kind == "T":
                gap = lab.ST
            if gap is not None:
                out[prev.offset + 1 : w.onset] = gap
        out[w.onset : w.offset + 1] = lab.CODE[w.wave_kind]
        prev = w
    return out


def waves_span(waves: Sequence[WaveBoundary]) -> tuple[int, int]:
    """Half-open sample range covered from the first onset to the last offset."""
    return waves[0].onset, waves[-1].offset + 1


# --------------------------------------------------------------------------- #
# CSV interchange
# --------------------------------------------------------------------------- #

def _read_rows(path, header, ncols):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    start = 1 if header else 0
    body = rows[start:]
    for k, row in enumerate(body):
        lineno = k + start + 1
        if len(row) != ncols:
            raise FormatError(f"{path}: expected {ncols} columns, got {len(row)}", lineno)
        try:
            idx = int(row[0])
        except ValueError:
            raise FormatError(f"{path}: bad index {row[0]!r}", lineno) from None
        if idx != k:
            raise FormatError(f"{path}: index {idx} out of sequence", lineno)
    return body


def write_signal_csv(path, values, header: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["index", "value"])
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])


def read_signal_csv(path, header: bool = True) -> np.ndarray:
    body = _read_rows(path, header, 2)
    try:
        return np.array([float(r[1]) for r in body], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def read_signal_record(path, sampling_rate_hz: int = 250, header: bool = True, record_id=None) -> EcgRecord:
    samples = read_signal_csv(path, header)
    if record_id is None:
        record_id = os.path.basename(path).split(".")[0]
    return EcgRecord(record_id, sampling_rate_hz, samples)


def write_label_csv(path, labels, header: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["index", "label"])
        for i, c in enumerate(labels):
            w.writerow([i, lab.COMPLEXES[int(c)]])


def read_label_csv(path, header: bool = True) -> np.ndarray:
    body = _read_rows(path, header, 2)
    try:
        return lab.encode(r[1] for r in body)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None

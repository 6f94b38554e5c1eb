import numpy as np
import pytest

from ecgseg.synth import SynthParams, generate_with_waves

ACCEPTANCE_LOG = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)


def encode_format212(values):
    """Reference packer written from the byte layout, independent of the decoder."""
    vals = [int(v) & 0xFFF for v in values]
    if len(vals) % 2:
        vals.append(0)
        odd = True
    else:
        odd = False
    out = bytearray()
    for a, b in zip(vals[0::2], vals[1::2]):
        out.append(a & 0xFF)
        out.append(((a >> 8) & 0x0F) | (((b >> 8) & 0x0F) << 4))
        out.append(b & 0xFF)
    if odd:
        out = out[:-1]
    return bytes(out)


def annotation_word(code, delta):
    w = (code << 10) | delta
    return bytes((w & 0xFF, w >> 8))


def encode_annotations(entries):
    """Write (time, code) pairs, using SKIP for gaps wider than 10 bits."""
    out = bytearray()
    t = 0
    for time, code in entries:
        delta = time - t
        if delta > 1023:
            out += annotation_word(59, 0)
            out += bytes(((delta >> 16) & 0xFF, (delta >> 24) & 0xFF, delta & 0xFF, (delta >> 8) & 0xFF))
            delta = 0
        out += annotation_word(code, delta)
        t = time
    out += b"\x00\x00"
    return bytes(out)


def waves_to_annotations(waves):
    codes = {"P": 24, "QRS": 1, "T": 27}
    entries = []
    for w in waves:
        mid = (w.onset + w.offset) // 2
        entries += [(w.onset, 39), (mid, codes[w.wave_kind]), (w.offset, 40)]
    return entries


@pytest.fixture(scope="session")
def clean_synth():
    params = SynthParams(beats=30, seed=3)
    record, labels, waves = generate_with_waves(params)
    return params, record, labels, waves


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

"""Numpy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def viterbi_kernel(log_emis, log_trans, log_init):
    T, K = log_emis.shape
    back = np.zeros((T, K), dtype=np.int32)
    delta = log_init + log_emis[0]
    for t in range(1, T):
        scores = delta[:, None] + log_trans
        # argmax returns the first maximum, i.e. the lowest predecessor index
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(K)] + log_emis[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])


def correlate_kernel(signal, taps):
    half = len(taps) // 2
    return np.correlate(np.pad(signal, half), taps, mode="valid")

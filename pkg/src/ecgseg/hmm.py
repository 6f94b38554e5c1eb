"""Left-to-right Gaussian HMM over ECG complex sub-states.

Every complex (P, PQ, QRS, ST, T, ISO) owns a chain of one or more
sub-states. Each sub-state stays put with probability 14/15 and advances
with 1/15; the last sub-state of a complex advances into the first sub-state
of the next complex. The final ISO sub-state re-enters the beat either at P
(9/150) or, for beats without a P wave, directly at PQ (1/150).
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np

from . import labels as lab
from ._backend import viterbi_kernel
from .errors import ConfigError, DecodeError, EstimationError, FormatError

logger = logging.getLogger(__name__)

STAY = Fraction(14, 15)
ADVANCE = Fraction(1, 15)
ISO_TO_P = Fraction(9, 150)
ISO_TO_PQ = Fraction(1, 150)

MODEL_FORMAT = "ecgseg-hmm"
MODEL_VERSION = 1

_LOG_2PI = np.log(2.0 * np.pi)


# --------------------------------------------------------------------------- #
# Topology
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class StateConfig:
    """Number of sub-states per complex."""

    P: int = 1
    PQ: int = 1
    QRS: int = 1
    ST: int = 1
    T: int = 1
    ISO: int = 1

    def __post_init__(self):
        for name in lab.COMPLEXES:
            n = getattr(self, name)
            if int(n) != n or n < 1:
                raise ConfigError(f"{name} needs at least one state, got {n}")

    @classmethod
    def from_mapping(cls, mapping) -> "StateConfig":
        unknown = set(mapping) - set(lab.COMPLEXES)
        if unknown:
            raise ConfigError(f"unknown complexes in state config: {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in mapping.items()})

    @classmethod
    def preset(cls, name: str) -> "StateConfig":
        """One of the shipped presets "6", "8", "11", "16", "19", "22"."""
        try:
            text = resources.files("ecgseg").joinpath("presets", f"{name}.cfg").read_text()
        except FileNotFoundError:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
        return cls.from_mapping(parse_kv(text))

    def counts(self) -> tuple:
        return tuple(getattr(self, c) for c in lab.COMPLEXES)

    def as_dict(self) -> dict:
        return dict(zip(lab.COMPLEXES, self.counts()))

    @property
    def total(self) -> int:
        return sum(self.counts())

    def offsets(self) -> tuple:
        """Index of the first sub-state of each complex."""
        return tuple(np.concatenate(([0], np.cumsum(self.counts())[:-1])).tolist())

    def state_map(self) -> list:
        return [(c, k) for c, n in zip(lab.COMPLEXES, self.counts()) for k in range(n)]


PRESET_NAMES = ("6", "8", "11", "16", "19", "22")


def parse_kv(text: str) -> dict:
    """Parse flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def transition_fractions(config: StateConfig) -> list:
    """Exact transition matrix as nested lists of ``Fraction``."""
    K = config.total
    A = [[Fraction(0)] * K for _ in range(K)]
    first = dict(zip(lab.COMPLEXES, config.offsets()))
    for c, (name, n) in enumerate(zip(lab.COMPLEXES, config.counts())):
        for k in range(n):
            s = first[name] + k
            A[s][s] = STAY
            if k < n - 1:
                A[s][s + 1] = ADVANCE
            elif name != "ISO":
                A[s][first[lab.COMPLEXES[c + 1]]] = ADVANCE
            else:
                A[s][first["P"]] += ISO_TO_P
                A[s][first["PQ"]] += ISO_TO_PQ
    return A


def build_transition_matrix(config: StateConfig) -> np.ndarray:
    A = np.array([[float(v) for v in row] for row in transition_fractions(config)])
    return A


def uniform_initial(n_states: int) -> np.ndarray:
    if n_states < 1:
        raise ValueError("need at least one state")
    return np.full(n_states, 1.0 / n_states)


# --------------------------------------------------------------------------- #
# Gaussian emissions
# --------------------------------------------------------------------------- #

def log_gaussian_pdf(x, mean, cov) -> np.ndarray:
    """Log multivariate normal density.

    ``x`` may be a single vector or an ``(n, d)`` array of vectors. Raises
    ``numpy.linalg.LinAlgError`` when ``cov`` is not positive definite.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    L = np.linalg.cholesky(np.asarray(cov, dtype=np.float64))
    d = mean.size
    diff = np.atleast_2d(x) - mean
    z = np.linalg.solve(L, diff.T)
    maha = np.einsum("ij,ij->j", z, z)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    out = -0.5 * (d * _LOG_2PI + logdet + maha)
    return out if x.ndim > 1 else float(out[0])


class _Moments:
    """Count, mean and scatter matrix; merges are associative (Chan et al.)."""

    __slots__ = ("n", "mean", "scatter")

    def __init__(self, d, n=0, mean=None, scatter=None):
        self.n = n
        self.mean = np.zeros(d) if mean is None else mean
        self.scatter = np.zeros((d, d)) if scatter is None else scatter

    @classmethod
    def of(cls, X):
        n = X.shape[0]
        if n == 0:
            return cls(X.shape[1])
        mean = X.mean(axis=0)
        D = X - mean
        return cls(X.shape[1], n, mean, D.T @ D)

    def merge(self, other):
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        scatter = self.scatter + other.scatter + np.outer(delta, delta) * (self.n * other.n / n)
        return _Moments(self.mean.size, n, mean, scatter)


def _moments_by_state(X, assign, K):
    return [_Moments.of(X[assign == k]) for k in range(K)]


def _merge_all(per_record, K, d):
    total = [_Moments(d) for _ in range(K)]
    for stats in per_record:
        total = [a.merge(b) for a, b in zip(total, stats)]
    return total


def regularization_eps(features_list) -> float:
    """``1e-6`` times the mean per-dimension variance of the pooled features."""
    X = np.concatenate([np.asarray(f, dtype=np.float64) for f in features_list])
    eps = 1e-6 * float(X.var(axis=0).mean())
    return eps if eps > 0 else 1e-12


def _covariance(m, eps, covariance_type):
    cov = m.scatter / m.n
    if covariance_type == "diag":
        cov = np.diag(np.diag(cov))
    return cov + eps * np.eye(cov.shape[0])


def _as_list(features, labels):
    if isinstance(features, np.ndarray) and features.ndim == 2:
        return [features], [labels]
    return list(features), list(labels)


def chunk_assignment(labels, config: StateConfig) -> np.ndarray:
    """Assign each sample to a sub-state by splitting every label run evenly.

    A run of complex ``c`` with ``n`` sub-states is cut into ``n`` contiguous
    chunks of ``len // n`` samples, the last chunk taking the remainder.
    """
    counts = config.counts()
    offsets = config.offsets()
    assign = np.empty(len(labels), dtype=np.int64)
    for code, start, stop in lab.runs(labels):
        n = counts[code]
        size = (stop - start) // n
        for k in range(n):
            a = start + k * size
            b = stop if k == n - 1 else a + size
            assign[a:b] = offsets[code] + k
    return assign


def init_emissions(features, labels, config: StateConfig, covariance_type: str = "full", eps=None):
    """Supervised emission estimates from labelled features.

    Accepts one ``(features, labels)`` pair or parallel lists of them.
    Returns ``(means, covs, eps)``.
    """
    F, Y = _as_list(features, labels)
    if len(F) != len(Y):
        raise ValueError("features and labels lists differ in length")
    for f, y in zip(F, Y):
        if len(f) != len(y):
            raise ValueError(f"features ({len(f)}) and labels ({len(y)}) differ in length")
    if eps is None:
        eps = regularization_eps(F)
    pooled = np.concatenate([np.asarray(y) for y in Y])
    for code, name in enumerate(lab.COMPLEXES):
        have = int(np.count_nonzero(pooled == code))
        need = 2 * config.counts()[code]
        if have < need:
            raise EstimationError(
                f"complex {name} has {have} labelled samples, needs at least {need}", name
            )
    K, d = config.total, F[0].shape[1]
    stats = _merge_all(
        [_moments_by_state(np.asarray(f, dtype=np.float64), chunk_assignment(y, config), K) for f, y in zip(F, Y)],
        K,
        d,
    )
    smap = config.state_map()
    for k, m in enumerate(stats):
        if m.n == 0:
            name, sub = smap[k]
            raise EstimationError(f"sub-state {sub + 1} of {name} received no samples", name)
    means = np.array([m.mean for m in stats])
    covs = np.array([_covariance(m, eps, covariance_type) for m in stats])
    return means, covs, eps


# --------------------------------------------------------------------------- #
# Model
# --------------------------------------------------------------------------- #

def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HmmModel:
    config: StateConfig
    transition: np.ndarray = field(repr=False)
    initial: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    covs: np.ndarray = field(repr=False)
    sampling_rate_hz: int = 250
    scale_exponents: tuple = (2, 3, 4)
    covariance_type: str = "full"
    regularization: float = 0.0
    zscore: bool = False

    def __post_init__(self):
        for name in ("transition", "initial", "means", "covs"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "scale_exponents", tuple(int(j) for j in self.scale_exponents))
        K, d = self.config.total, len(self.scale_exponents)
        if self.transition.shape != (K, K):
            raise ValueError(f"transition must be {K}x{K}")
        if self.initial.shape != (K,):
            raise ValueError(f"initial must have {K} entries")
        if self.means.shape != (K, d) or self.covs.shape != (K, d, d):
            raise ValueError(f"emissions must be {K} means of size {d} and {d}x{d} covariances")
        if np.any(self.transition < 0) or np.max(np.abs(self.transition.sum(axis=1) - 1)) > 1e-12:
            raise ValueError("transition rows must be probability vectors")
        if np.any(self.initial < 0) or abs(self.initial.sum() - 1) > 1e-12:
            raise ValueError("initial distribution must sum to 1")
        if self.covariance_type not in ("full", "diag"):
            raise ValueError(f"unknown covariance type {self.covariance_type!r}")

    @classmethod
    def from_labels(cls, features, labels, config: StateConfig, sampling_rate_hz=250,
                    scale_exponents=(2, 3, 4), covariance_type="full", zscore=False) -> "HmmModel":
        """Fixed topology, uniform start, emissions estimated from labels."""
        means, covs, eps = init_emissions(features, labels, config, covariance_type)
        return cls(
            config, build_transition_matrix(config), uniform_initial(config.total),
            means, covs, sampling_rate_hz, scale_exponents, covariance_type, eps, zscore,
        )

    @property
    def n_states(self) -> int:
        return self.config.total

    @property
    def state_map(self) -> list:
        return self.config.state_map()

    @property
    def state_complex(self) -> np.ndarray:
        """Complex code owning each state."""
        return np.repeat(np.arange(len(lab.COMPLEXES), dtype=np.int8), self.config.counts())

    def with_params(self, **changes) -> "HmmModel":
        params = {f: getattr(self, f) for f in self.__dataclass_fields__}
        params.update(changes)
        return HmmModel(**params)

    def log_emissions(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        out = np.empty((X.shape[0], self.n_states))
        for k in range(self.n_states):
            out[:, k] = log_gaussian_pdf(X, self.means[k], self.covs[k])
        return out

    # serialization

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "sampling_rate_hz": self.sampling_rate_hz,
            "scale_exponents": list(self.scale_exponents),
            "zscore": bool(self.zscore),
            "state_config": self.config.as_dict(),
            "state_map": [[c, k] for c, k in self.state_map],
            "covariance_type": self.covariance_type,
            "regularization": float(self.regularization),
            "transition": self.transition.tolist(),
            "initial": self.initial.tolist(),
            "emissions": [
                {"mean": m.tolist(), "cov": c.tolist()} for m, c in zip(self.means, self.covs)
            ],
        }

    def dumps(self) -> str:
        """JSON text with one matrix row or emission per line."""
        doc = self.to_dict()
        items = []
        for key, value in doc.items():
            if key in ("transition", "emissions", "state_map"):
                body = ",\n".join("  " + json.dumps(v) for v in value)
                items.append(f" {json.dumps(key)}: [\n{body}\n ]")
            else:
                items.append(f" {json.dumps(key)}: {json.dumps(value)}")
        return "{\n" + ",\n".join(items) + "\n}\n"

    @classmethod
    def from_dict(cls, doc) -> "HmmModel":
        if doc.get("format") != MODEL_FORMAT:
            raise FormatError(f"not an {MODEL_FORMAT} document")
        if doc.get("version") != MODEL_VERSION:
            raise FormatError(f"unsupported model version {doc.get('version')}")
        try:
            config = StateConfig.from_mapping(doc["state_config"])
            if [tuple(s) for s in doc["state_map"]] != config.state_map():
                raise FormatError("state_map does not match state_config")
            return cls(
                config,
                np.array(doc["transition"]),
                np.array(doc["initial"]),
                np.array([e["mean"] for e in doc["emissions"]]),
                np.array([e["cov"] for e in doc["emissions"]]),
                int(doc["sampling_rate_hz"]),
                tuple(doc["scale_exponents"]),
                doc["covariance_type"],
                float(doc["regularization"]),
                bool(doc.get("zscore", False)),
            )
        except (KeyError, TypeError, ValueError, ConfigError) as exc:
            raise FormatError(f"invalid model document: {exc}") from None

    @classmethod
    def loads(cls, text: str) -> "HmmModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"model file is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "HmmModel":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


# --------------------------------------------------------------------------- #
# Decoding
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class StatePath:
    states: np.ndarray
    log_prob: float


def _safe_log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def viterbi_decode(model: HmmModel, features) -> StatePath:
    """Most probable state sequence, computed in log space.

    Ties are resolved toward the lower state index, at the final step and at
    every backtracking step.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("features must be a nonempty (T, d) array")
    log_emis = np.ascontiguousarray(model.log_emissions(X))
    path, log_prob = viterbi_kernel(
        log_emis,
        np.ascontiguousarray(_safe_log(model.transition)),
        np.ascontiguousarray(_safe_log(model.initial)),
    )
    if not np.isfinite(log_prob):
        raise DecodeError("every state path has zero probability")
    return StatePath(path, float(log_prob))


def states_to_labels(path, model: HmmModel) -> np.ndarray:
    states = path.states if isinstance(path, StatePath) else np.asarray(path, dtype=np.int64)
    return model.state_complex[states]


# --------------------------------------------------------------------------- #
# Training
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class IterationDiagnostics:
    iteration: int
    log_prob: float
    changed_fraction: float
    frozen_states: tuple
    label_agreement: float | None
    wall_time_s: float


def _transition_counts(states, K):
    C = np.zeros((K, K))
    np.add.at(C, (states[:-1], states[1:]), 1.0)
    return C


def viterbi_train(model: HmmModel, dataset, max_iters: int = 20, tol: float = 1e-3,
                  reestimate_transitions: bool = False, n_jobs: int = 1):
    """Viterbi (segmental k-means) training of the emission parameters.

    ``dataset`` is a list of ``(features, labels_or_None)``. Each iteration
    decodes every record, then refits each state's Gaussian to the samples
    its decoded segments cover. A state that receives no samples keeps its
    previous parameters. Training stops once fewer than ``tol`` of the
    samples change state between iterations, or after ``max_iters``.

    Returns ``(model, diagnostics)``; ``diagnostics[i].log_prob`` is the
    total decoded log-probability under the model entering iteration ``i+1``.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    feats = [np.asarray(f, dtype=np.float64) for f, _ in dataset]
    truth = [None if y is None else np.asarray(y) for _, y in dataset]
    total = sum(f.shape[0] for f in feats)
    K, d = model.n_states, feats[0].shape[1]
    diagnostics = []
    prev_paths = None

    pool = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    try:
        for it in range(1, max_iters + 1):
            t0 = time.perf_counter()
            current = model
            if pool is None:
                paths = [viterbi_decode(current, f) for f in feats]
            else:
                paths = list(pool.map(lambda f: viterbi_decode(current, f), feats))
            log_prob = float(sum(p.log_prob for p in paths))
            if prev_paths is None:
                changed = 1.0
            else:
                changed = sum(int(np.count_nonzero(a.states != b.states)) for a, b in zip(paths, prev_paths)) / total

            stats = _merge_all([_moments_by_state(f, p.states, K) for f, p in zip(feats, paths)], K, d)
            means = model.means.copy()
            covs = model.covs.copy()
            frozen = []
            for k, m in enumerate(stats):
                if m.n == 0:
                    frozen.append(k)
                    continue
                means[k] = m.mean
                covs[k] = _covariance(m, model.regularization, model.covariance_type)
            if frozen:
                logger.warning("iteration %d: states %s received no samples; parameters kept", it, frozen)
            updates = {"means": means, "covs": covs}
            if reestimate_transitions:
                C = sum(_transition_counts(p.states, K) for p in paths)
                A = model.transition.copy()
                rows = C.sum(axis=1) > 0
                A[rows] = C[rows] / C[rows].sum(axis=1, keepdims=True)
                updates["transition"] = A
            model = model.with_params(**updates)

            agree = None
            if all(y is not None for y in truth):
                hits = sum(
                    int(np.count_nonzero(states_to_labels(p, model) == y)) for p, y in zip(paths, truth)
                )
                agree = hits / total
            diagnostics.append(
                IterationDiagnostics(it, log_prob, changed, tuple(frozen), agree, time.perf_counter() - t0)
            )
            logger.info("iteration %d: log-prob %.6f, changed %.5f", it, log_prob, changed)
            prev_paths = paths
            if changed < tol:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return model, diagnostics

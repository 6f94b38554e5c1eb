"""Command-line interface: ``ecgseg <command> [options]``.

Commands: prepare, train, segment, evaluate, compare-pt, synth.

Options may also come from a flat ``key = value`` config file passed with
``--config``; command-line flags override it. Keys are the long option
names with dashes replaced by underscores (``max_iters = 20``).

Exit status is 0 on success, 2 for configuration errors and 3 for data
errors (including partial failures in multi-record commands).
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from . import labels as lab
from . import metrics as met
from . import pan_tompkins as pt
from .errors import ConfigError, DataError, EcgsegError
from .features import DEFAULT_SCALE_EXPONENTS, cwt, read_feature_csv, write_feature_csv
from .hmm import HmmModel, StateConfig, parse_kv, states_to_labels, viterbi_decode, viterbi_train
from .signal_io import (
    EcgRecord,
    annotations_to_waves,
    derive_labels,
    read_label_csv,
    read_signal_record,
    read_wfdb_annotations,
    read_wfdb_record,
    waves_span,
    write_label_csv,
    write_signal_csv,
)
from .synth import SynthParams, generate

logger = logging.getLogger("ecgseg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

#: manually reviewed QT Database annotators first, then the automatic ones
DEFAULT_ANNOTATORS = ("q1c", "q2c", "pu0", "pu")
PREPARED_INFO = "prepared.cfg"


@dataclass
class RunConfig:
    records: str | None = None
    record: str | None = None
    data_dir: str = "."
    model: str | None = None
    out: str = "."
    preset: str = "16"
    counts: str | None = None
    scales: str = ",".join(str(j) for j in DEFAULT_SCALE_EXPONENTS)
    max_iters: int = 20
    tol: float = 1e-3
    gamma: float = pt.DEFAULT_GAMMA
    seed: int = 0
    fs: int = 250
    annotator: str | None = None
    crop: bool = True
    covariance: str = "full"
    reestimate_transitions: bool = False
    zscore: bool = False
    jobs: int = 1
    truth: str | None = None
    pred: str | None = None
    tolerance: int = 0
    plot_data: bool = False
    # synth
    beats: int = 60
    rr_ms: float = 1000.0
    noise: float = 0.0
    p_absent: float = 0.0
    name: str = "synth"

    def scale_exponents(self):
        try:
            return tuple(int(s) for s in str(self.scales).split(",") if s.strip())
        except ValueError:
            raise ConfigError(f"bad scale list {self.scales!r}") from None

    def state_config(self):
        if self.counts:
            try:
                pairs = dict(item.split(":") for item in self.counts.split(","))
            except ValueError:
                raise ConfigError(f"bad --counts {self.counts!r}; use e.g. P:3,PQ:2,QRS:3,ST:2,T:3,ISO:3") from None
            return StateConfig.from_mapping(pairs)
        return StateConfig.preset(str(self.preset))

    def record_names(self):
        if self.record:
            return [self.record]
        if not self.records:
            raise ConfigError("no records given; use --records FILE or --record NAME")
        if not os.path.exists(self.records):
            raise ConfigError(f"records list {self.records} does not exist")
        with open(self.records, encoding="utf-8") as fh:
            return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(name, value, default):
    kind = type(default) if default is not None else str
    if isinstance(value, str):
        if kind is bool:
            if value.lower() not in _BOOL:
                raise ConfigError(f"{name}: expected a boolean, got {value!r}")
            return _BOOL[value.lower()]
        try:
            return kind(value)
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {value!r} as {kind.__name__}") from None
    return value


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file {args.config} does not exist")
        with open(args.config, encoding="utf-8") as fh:
            for key, value in parse_kv(fh.read()).items():
                if key not in known:
                    raise ConfigError(f"unknown config key {key!r}")
                setattr(cfg, key, _coerce(key, value, getattr(cfg, key)))
    for key in known:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, _coerce(key, value, getattr(cfg, key)))
    return cfg


# --------------------------------------------------------------------------- #
# Record access
# --------------------------------------------------------------------------- #

def _path(cfg, name, suffix):
    return os.path.join(cfg.data_dir, f"{name}{suffix}")


def load_record(cfg, name, need_labels=True):
    """Return ``(EcgRecord, labels or None)`` from WFDB or CSV files."""
    stem = os.path.join(cfg.data_dir, name)
    if os.path.exists(stem + ".hea"):
        record = read_wfdb_record(stem)
        labels = None
        annotators = (cfg.annotator,) if cfg.annotator else DEFAULT_ANNOTATORS
        ann = next((stem + "." + a for a in annotators if os.path.exists(stem + "." + a)), None)
        if ann is not None:
            waves = annotations_to_waves(read_wfdb_annotations(ann), strict=False)
            waves = [w for w in waves if w.offset < len(record)]
            if waves:
                labels = derive_labels(waves, len(record))
                if cfg.crop:
                    a, b = waves_span(waves)
                    record = EcgRecord(record.record_id, record.sampling_rate_hz, record.samples[a:b])
                    labels = labels[a:b]
        if need_labels and labels is None:
            raise DataError(f"{name}: no usable annotation file ({', '.join(annotators)})")
        return record, labels
    sig = _path(cfg, name, ".signal.csv")
    if not os.path.exists(sig):
        raise DataError(f"{name}: neither {stem}.hea nor {sig} exists")
    record = read_signal_record(sig, cfg.fs, record_id=name)
    lab_path = _path(cfg, name, ".labels.csv")
    labels = read_label_csv(lab_path) if os.path.exists(lab_path) else None
    if labels is not None and len(labels) != len(record):
        raise DataError(f"{name}: {len(labels)} labels for {len(record)} samples")
    if need_labels and labels is None:
        raise DataError(f"{name}: missing {lab_path}")
    return record, labels


def _read_prepared_info(data_dir):
    path = os.path.join(data_dir, PREPARED_INFO)
    if not os.path.exists(path):
        return {}
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read())


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def cmd_prepare(cfg: RunConfig) -> int:
    names = cfg.record_names()
    if not names:
        raise ConfigError("records list is empty")
    scales = cfg.scale_exponents()
    os.makedirs(cfg.out, exist_ok=True)
    failed = 0
    totals = np.zeros(len(lab.COMPLEXES), dtype=np.int64)
    n_samples = 0
    fs_seen = set()
    for name in names:
        try:
            record, labels = load_record(cfg, name)
        except (EcgsegError, OSError) as exc:
            logger.error("%s: %s", name, exc)
            failed += 1
            continue
        feats = cwt(record.samples, scales, zscore=cfg.zscore)
        write_feature_csv(os.path.join(cfg.out, f"{name}.features.csv"), feats, scales)
        write_label_csv(os.path.join(cfg.out, f"{name}.labels.csv"), labels)
        write_signal_csv(os.path.join(cfg.out, f"{name}.signal.csv"), record.samples)
        totals += np.bincount(labels, minlength=len(lab.COMPLEXES))
        n_samples += len(record)
        fs_seen.add(record.sampling_rate_hz)
    if len(fs_seen) > 1:
        logger.error("records have different sampling rates: %s", sorted(fs_seen))
        return EXIT_DATA
    if fs_seen:
        with open(os.path.join(cfg.out, PREPARED_INFO), "w", encoding="utf-8") as fh:
            fh.write(f"fs = {fs_seen.pop()}\nscales = {','.join(map(str, scales))}\nzscore = {cfg.zscore}\n")
    ok = len(names) - failed
    print(f"records: {ok} prepared, {failed} failed; samples: {n_samples}")
    print("  ".join(f"{c}={int(n)}" for c, n in zip(lab.COMPLEXES, totals)))
    return EXIT_DATA if failed else EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    names = cfg.record_names()
    if not names:
        raise ConfigError("records list is empty")
    config = cfg.state_config()
    info = _read_prepared_info(cfg.data_dir)
    fs = int(info.get("fs", cfg.fs))
    zscore = _coerce("zscore", info.get("zscore", cfg.zscore), False)
    dataset = []
    scales = None
    for name in names:
        feats, exps = read_feature_csv(_path(cfg, name, ".features.csv"))
        labels = read_label_csv(_path(cfg, name, ".labels.csv"))
        if len(feats) != len(labels):
            raise DataError(f"{name}: {len(feats)} feature rows for {len(labels)} labels")
        if scales is not None and exps != scales:
            raise DataError(f"{name}: feature scales {exps} differ from {scales}")
        scales = exps
        dataset.append((feats, labels))
    t0 = time.perf_counter()
    init = HmmModel.from_labels(
        [f for f, _ in dataset], [y for _, y in dataset], config,
        sampling_rate_hz=fs, scale_exponents=scales, covariance_type=cfg.covariance, zscore=zscore,
    )
    model, diagnostics = viterbi_train(
        init, dataset, cfg.max_iters, cfg.tol, cfg.reestimate_transitions, cfg.jobs
    )
    elapsed = time.perf_counter() - t0
    os.makedirs(cfg.out, exist_ok=True)
    model_path = cfg.model or os.path.join(cfg.out, "model.json")
    model.save(model_path)
    _write_rows(
        os.path.join(cfg.out, "train_log.csv"),
        ["iteration", "log_prob", "changed_fraction", "label_agreement", "frozen_states", "wall_time_s"],
        [
            [d.iteration, repr(d.log_prob), repr(d.changed_fraction),
             "" if d.label_agreement is None else repr(d.label_agreement),
             " ".join(map(str, d.frozen_states)), f"{d.wall_time_s:.3f}"]
            for d in diagnostics
        ],
    )
    print(f"trained {config.total}-state model on {len(dataset)} records "
          f"in {len(diagnostics)} iterations ({elapsed:.2f} s); wrote {model_path}")
    return EXIT_OK


def _segment_one(model, record):
    if record.sampling_rate_hz != model.sampling_rate_hz:
        raise DataError(
            f"{record.record_id}: sampling rate {record.sampling_rate_hz} Hz does not match "
            f"the model's {model.sampling_rate_hz} Hz"
        )
    feats = cwt(record.samples, model.scale_exponents, zscore=model.zscore)
    path = viterbi_decode(model, feats)
    return feats, path, states_to_labels(path, model)


def cmd_segment(cfg: RunConfig) -> int:
    if not cfg.model:
        raise ConfigError("segment needs --model")
    model = HmmModel.load(cfg.model)
    names = cfg.record_names()
    os.makedirs(cfg.out, exist_ok=True)
    failed = 0
    for name in names:
        try:
            record, _ = load_record(cfg, name, need_labels=False)
            feats, path, labels = _segment_one(model, record)
        except (EcgsegError, OSError) as exc:
            logger.error("%s: %s", name, exc)
            failed += 1
            continue
        write_label_csv(os.path.join(cfg.out, f"{name}.labels.csv"), labels)
        if cfg.plot_data:
            cols = [f"w{2 ** j}" for j in model.scale_exponents]
            _write_rows(
                os.path.join(cfg.out, f"{name}.plot.csv"),
                ["index", "signal"] + cols + ["label", "state"],
                (
                    [i, repr(float(v))] + [repr(float(f)) for f in row] + [lab.COMPLEXES[c], int(s)]
                    for i, (v, row, c, s) in enumerate(zip(record.samples, feats, labels, path.states))
                ),
            )
        print(f"{name}: {len(labels)} samples, log-prob {path.log_prob:.6f}")
    return EXIT_DATA if failed else EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    if not cfg.truth or not cfg.pred:
        raise ConfigError("evaluate needs --truth DIR and --pred DIR")
    if cfg.records or cfg.record:
        names = cfg.record_names()
    else:
        names = sorted(f[: -len(".labels.csv")] for f in os.listdir(cfg.pred) if f.endswith(".labels.csv"))
    if not names:
        raise ConfigError(f"no predicted label files in {cfg.pred}")
    table = met.ConfusionTable(np.zeros((6, 6), dtype=np.int64))
    for name in names:
        truth = read_label_csv(os.path.join(cfg.truth, f"{name}.labels.csv"))
        pred = read_label_csv(os.path.join(cfg.pred, f"{name}.labels.csv"))
        if len(truth) != len(pred):
            raise DataError(f"{name}: {len(truth)} true labels vs {len(pred)} predicted")
        table = table + met.confusion(truth, pred, tolerance=cfg.tolerance)
    rep = met.report(table)
    text = met.render_table({"HMM": rep})
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(os.path.join(cfg.out, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(met.report_csv(rep))
    sys.stdout.write(text)
    print(f"accuracy {rep.accuracy:.4f} over {rep.n_samples} samples in {len(names)} records")
    return EXIT_OK


def cmd_compare_pt(cfg: RunConfig) -> int:
    names = cfg.record_names()
    model = HmmModel.load(cfg.model) if cfg.model else None
    os.makedirs(cfg.out, exist_ok=True)
    classes = ("rest", "QRS")
    pt_table = met.ConfusionTable(np.zeros((2, 2)), classes)
    hmm_table = met.ConfusionTable(np.zeros((2, 2)), classes)
    for name in names:
        record, labels = load_record(cfg, name)
        truth = lab.binarize_qrs(labels)
        intervals, mask = pt.segment_qrs(record.samples, record.sampling_rate_hz, cfg.gamma)
        pt.write_interval_csv(os.path.join(cfg.out, f"{name}.qrs.csv"), intervals)
        pt_table = pt_table + met.confusion(truth, mask, classes)
        if model is not None:
            _, _, pred = _segment_one(model, record)
            hmm_table = hmm_table + met.confusion(truth, lab.binarize_qrs(pred), classes)
    columns = {}
    if model is not None:
        columns["HMM"] = met.report(hmm_table)
    columns["Pan-Tompkins"] = met.report(pt_table)
    text = met.render_table(columns, order=("QRS",))
    with open(os.path.join(cfg.out, "compare_pt.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    for col, rep in columns.items():
        fname = "compare_pt_" + col.lower().replace("-", "_") + ".csv"
        with open(os.path.join(cfg.out, fname), "w", encoding="utf-8") as fh:
            fh.write(met.report_csv(rep, order=("QRS",)))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    try:
        params = SynthParams(
            beats=cfg.beats, fs=cfg.fs, rr_ms=cfg.rr_ms, noise_sigma=cfg.noise,
            p_absent_prob=cfg.p_absent, seed=cfg.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    record, labels = generate(params, cfg.name)
    os.makedirs(cfg.out, exist_ok=True)
    write_signal_csv(os.path.join(cfg.out, f"{cfg.name}.signal.csv"), record.samples)
    write_label_csv(os.path.join(cfg.out, f"{cfg.name}.labels.csv"), labels)
    print(f"{cfg.name}: {params.beats} beats, {len(record)} samples at {params.fs} Hz")
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "segment": cmd_segment,
    "evaluate": cmd_evaluate,
    "compare-pt": cmd_compare_pt,
    "synth": cmd_synth,
}


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--records", help="file listing record names, one per line")
    common.add_argument("--record", help="single record name (instead of --records)")
    common.add_argument("--data-dir", dest="data_dir", help="directory holding the records")
    common.add_argument("--model", help="model file to write (train) or read")
    common.add_argument("--out", help="output directory")
    common.add_argument("--preset", help="state-count preset: 6, 8, 11, 16, 19 or 22")
    common.add_argument("--counts", help="explicit state counts, e.g. P:3,PQ:2,QRS:3,ST:2,T:3,ISO:3")
    common.add_argument("--scales", help="comma-separated scale exponents (default 2,3,4)")
    common.add_argument("--max-iters", dest="max_iters", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--fs", type=int, help="sampling rate of CSV signals (default 250)")
    common.add_argument("--annotator", help="WFDB annotation extension (default: q1c if present)")
    common.add_argument("--no-crop", dest="crop", action="store_const", const=False,
                        help="keep WFDB samples outside the annotated span")
    common.add_argument("--covariance", choices=("full", "diag"))
    common.add_argument("--reestimate-transitions", dest="reestimate_transitions",
                        action="store_const", const=True)
    common.add_argument("--zscore", action="store_const", const=True)
    common.add_argument("--jobs", type=int)
    common.add_argument("--truth", help="directory of true label CSVs (evaluate)")
    common.add_argument("--pred", help="directory of predicted label CSVs (evaluate)")
    common.add_argument("--tolerance", type=int, help="boundary tolerance in samples (evaluate)")
    common.add_argument("--plot-data", dest="plot_data", action="store_const", const=True,
                        help="also write per-sample plot series (segment)")
    common.add_argument("--beats", type=int)
    common.add_argument("--rr-ms", dest="rr_ms", type=float)
    common.add_argument("--noise", type=float, help="noise standard deviation (synth)")
    common.add_argument("--p-absent", dest="p_absent", type=float)
    common.add_argument("--name", help="record name (synth)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ecgseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__name__.replace("cmd_", ""))
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (DataError, OSError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

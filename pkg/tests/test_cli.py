import os

import numpy as np
import pytest

from ecgseg.cli import main
from ecgseg.features import read_feature_csv
from ecgseg.hmm import HmmModel, StateConfig
from ecgseg.signal_io import read_label_csv, write_label_csv, write_signal_csv
from ecgseg.synth import SynthParams, generate_with_waves

from conftest import encode_annotations, encode_format212, waves_to_annotations


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic records prepared and a small model trained once for the module."""
    root = tmp_path_factory.mktemp("cli")
    raw, prep, out = root / "raw", root / "prep", root / "out"
    names = []
    for i in range(3):
        name = f"s{i}"
        assert run("synth", "--out", raw, "--name", name, "--beats", 12, "--seed", i, "--noise", 0.02) == 0
        names.append(name)
    (root / "records.txt").write_text("\n".join(names) + "\n")
    assert run("prepare", "--records", root / "records.txt", "--data-dir", raw, "--out", prep) == 0
    assert run("train", "--records", root / "records.txt", "--data-dir", prep, "--out", out,
               "--preset", "6", "--max-iters", 3) == 0
    return root, raw, prep, out, names


def test_prepare_outputs(workspace):
    root, raw, prep, _, names = workspace
    for name in names:
        feats, exps = read_feature_csv(prep / f"{name}.features.csv")
        labels = read_label_csv(prep / f"{name}.labels.csv")
        assert exps == (2, 3, 4)
        assert feats.shape == (labels.size, 3)
        np.testing.assert_array_equal(labels, read_label_csv(raw / f"{name}.labels.csv"))
    assert "fs = 250" in (prep / "prepared.cfg").read_text()


def test_prepare_empty_list(tmp_path):
    (tmp_path / "empty.txt").write_text("\n")
    assert run("prepare", "--records", tmp_path / "empty.txt", "--data-dir", tmp_path, "--out", tmp_path) == 2


def test_prepare_wfdb_record(tmp_path):
    params = SynthParams(beats=6, seed=5)
    rec, labels, waves = generate_with_waves(params)
    digital = np.round(rec.samples * 200).astype(int)
    (tmp_path / "rec.dat").write_bytes(encode_format212(digital))
    (tmp_path / "rec.hea").write_text(f"rec 1 250 {digital.size}\nrec.dat 212 200 12 0 {digital[0]} 0 0 MLII\n")
    (tmp_path / "rec.q1c").write_bytes(encode_annotations(waves_to_annotations(waves)))
    out = tmp_path / "prep"
    assert run("prepare", "--record", "rec", "--data-dir", tmp_path, "--out", out) == 0
    got = read_label_csv(out / "rec.labels.csv")
    # cropped to the first onset .. last offset of the annotations
    a, b = waves[0].onset, waves[-1].offset + 1
    np.testing.assert_array_equal(got, labels[a:b])


def test_train_model_file(workspace):
    _, _, _, out, _ = workspace
    model = HmmModel.load(out / "model.json")
    assert model.config == StateConfig.preset("6")
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0].startswith("iteration,log_prob")
    assert 2 <= len(log) <= 4


def test_train_zero_iterations_equals_initialisation(workspace, tmp_path):
    root, _, prep, _, names = workspace
    assert run("train", "--records", root / "records.txt", "--data-dir", prep, "--out", tmp_path,
               "--preset", "16", "--max-iters", 0) == 0
    model = HmmModel.load(tmp_path / "model.json")
    feats = [read_feature_csv(prep / f"{n}.features.csv")[0] for n in names]
    ys = [read_label_csv(prep / f"{n}.labels.csv") for n in names]
    ref = HmmModel.from_labels(feats, ys, StateConfig.preset("16"))
    assert model.n_states == 16
    assert model.dumps() == ref.dumps()


def test_segment_deterministic(workspace, tmp_path):
    root, raw, _, out, names = workspace
    args = ["segment", "--records", root / "records.txt", "--data-dir", raw, "--model", out / "model.json"]
    assert run(*args, "--out", tmp_path / "a", "--plot-data") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    for n in names:
        assert (tmp_path / "a" / f"{n}.labels.csv").read_bytes() == (tmp_path / "b" / f"{n}.labels.csv").read_bytes()
    plot = (tmp_path / "a" / f"{names[0]}.plot.csv").read_text().splitlines()
    assert plot[0] == "index,signal,w4,w8,w16,label,state"


def test_segment_short_record(workspace, tmp_path):
    _, _, _, out, _ = workspace
    write_signal_csv(tmp_path / "short.signal.csv", np.sin(np.arange(40) / 5.0))
    assert run("segment", "--record", "short", "--data-dir", tmp_path, "--model", out / "model.json",
               "--out", tmp_path / "o") == 0
    assert read_label_csv(tmp_path / "o" / "short.labels.csv").size == 40


def test_segment_rate_mismatch(workspace, tmp_path):
    _, raw, _, out, names = workspace
    assert run("segment", "--record", names[0], "--data-dir", raw, "--fs", 360,
               "--model", out / "model.json", "--out", tmp_path) == 3


def test_evaluate_identical(workspace, tmp_path):
    _, raw, _, _, _ = workspace
    assert run("evaluate", "--truth", raw, "--pred", raw, "--out", tmp_path) == 0
    text = (tmp_path / "metrics.csv").read_text()
    assert "# accuracy=1.0" in text
    assert "QRS,1.0,1.0,1.0" in text


def test_evaluate_pools_records(workspace, tmp_path):
    _, raw, _, out, names = workspace
    seg = tmp_path / "seg"
    for n in names:
        assert run("segment", "--record", n, "--data-dir", raw, "--model", out / "model.json", "--out", seg) == 0
    assert run("evaluate", "--truth", raw, "--pred", seg, "--out", tmp_path / "e1") == 0
    cat_t = tmp_path / "ct"
    cat_p = tmp_path / "cp"
    os.makedirs(cat_t)
    os.makedirs(cat_p)
    write_label_csv(cat_t / "all.labels.csv", np.concatenate([read_label_csv(raw / f"{n}.labels.csv") for n in names]))
    write_label_csv(cat_p / "all.labels.csv", np.concatenate([read_label_csv(seg / f"{n}.labels.csv") for n in names]))
    assert run("evaluate", "--truth", cat_t, "--pred", cat_p, "--out", tmp_path / "e2") == 0
    a = (tmp_path / "e1" / "metrics.csv").read_text()
    b = (tmp_path / "e2" / "metrics.csv").read_text()
    assert a == b


def test_compare_pt(workspace, tmp_path):
    root, raw, _, out, names = workspace
    assert run("compare-pt", "--records", root / "records.txt", "--data-dir", raw,
               "--model", out / "model.json", "--out", tmp_path) == 0
    text = (tmp_path / "compare_pt.txt").read_text()
    assert "HMM" in text and "Pan-Tompkins" in text
    rows = (tmp_path / "compare_pt_pan_tompkins.csv").read_text().splitlines()
    qrs = rows[1].split(",")
    assert qrs[0] == "QRS" and float(qrs[2]) >= 0.9
    assert (tmp_path / f"{names[0]}.qrs.csv").read_text().startswith("r_peak,onset,offset\n")


def test_compare_pt_without_model(workspace, tmp_path):
    root, raw, _, _, _ = workspace
    assert run("compare-pt", "--records", root / "records.txt", "--data-dir", raw, "--out", tmp_path) == 0
    assert not (tmp_path / "compare_pt_hmm.csv").exists()


def test_config_file_and_overrides(workspace, tmp_path):
    root, _, prep, _, _ = workspace
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"records = {root / 'records.txt'}\ndata_dir = {prep}\npreset = 8\nmax_iters = 1\n")
    assert run("train", "--config", cfg, "--out", tmp_path) == 0
    assert HmmModel.load(tmp_path / "model.json").n_states == 8
    assert run("train", "--config", cfg, "--out", tmp_path, "--preset", "11") == 0
    assert HmmModel.load(tmp_path / "model.json").n_states == 11


def test_exit_codes(workspace, tmp_path):
    root, raw, prep, _, _ = workspace
    assert run("train", "--records", tmp_path / "missing.txt", "--data-dir", prep, "--out", tmp_path) == 2
    (tmp_path / "bad.cfg").write_text("no_such_key = 1\n")
    assert run("train", "--config", tmp_path / "bad.cfg") == 2
    assert run("train", "--records", root / "records.txt", "--data-dir", prep, "--preset", "7") == 2
    assert run("train", "--record", "nope", "--data-dir", prep, "--out", tmp_path) == 3
    assert run("prepare", "--record", "nope", "--data-dir", raw, "--out", tmp_path) == 3
    assert run("segment", "--record", "x", "--data-dir", raw) == 2

"""End-to-end runs of every CLI subcommand on a tiny corpus."""

import csv
import json
import os

import numpy as np
import pytest

from maskpf.audio_io import read_wav
from maskpf.cli import main


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def read_header(out_dir):
    with open(os.path.join(out_dir, "run_header.json"), encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, manifest_path):
    out = tmp_path_factory.mktemp("trained")
    code = main([
        "train", "--manifest", manifest_path, "--out-dir", str(out),
        "--kind", "fcnn", "--seed", "3", "--epochs", "2",
    ])
    assert code == 0
    return str(out)


def test_version_flag_exits_clean(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip()


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_stats_csv_and_header(tmp_path, manifest_path, capsys):
    out = tmp_path / "stats"
    code = main(["stats", "--manifest", manifest_path, "--out-dir", str(out),
                 "--split", "train"])
    assert code == 0
    assert "utterances" in capsys.readouterr().out
    rows = read_rows(out / "stats.csv")
    assert rows[0] == ["source", "bucket", "count", "fraction"]
    assert len(rows) == 5
    assert all(r[0] == "q_low" for r in rows[1:])
    fractions = [float(r[3]) for r in rows[1:]]
    counts = [int(r[2]) for r in rows[1:]]
    assert abs(sum(fractions) - 1.0) < 1e-4
    assert all(c >= 0 for c in counts)
    header = read_header(out)
    assert header["command"] == "stats"
    assert header["args"]["split"] == "train"
    assert header["kernel_backend"] in ("numba", "numpy")
    assert not any("time" in k or "date" in k for k in header)


def test_stats_jobs_parity(tmp_path, manifest_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["stats", "--manifest", manifest_path, "--out-dir", str(a),
                 "--split", "train", "--jobs", "1"]) == 0
    assert main(["stats", "--manifest", manifest_path, "--out-dir", str(b),
                 "--split", "train", "--jobs", "2"]) == 0
    assert (a / "stats.csv").read_bytes() == (b / "stats.csv").read_bytes()


def test_oracle_sweep_descends(tmp_path, manifest_path):
    out = tmp_path / "oracle"
    code = main(["oracle", "--manifest", manifest_path, "--out-dir", str(out),
                 "--split", "test", "--bounds", "1,2,5,inf", "--envelope"])
    assert code == 0
    rows = read_rows(out / "oracle.csv")
    labels = [r[0] for r in rows[1:]]
    assert labels == ["1", "2", "5", "inf", "envelope"]
    lsds = [float(r[1]) for r in rows[1:]]
    bounded = lsds[:4]
    assert all(x >= y - 1e-12 for x, y in zip(bounded, bounded[1:]))
    assert bounded[-1] < 0.01
    assert lsds[4] > lsds[1]


def test_oracle_rejects_bad_bounds(tmp_path, manifest_path, capsys):
    out = tmp_path / "oracle"
    assert main(["oracle", "--manifest", manifest_path, "--out-dir", str(out),
                 "--bounds", "2,zero"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["oracle", "--manifest", manifest_path, "--out-dir", str(out),
                 "--bounds", "-1"]) == 2
    capsys.readouterr()


def test_train_outputs(trained_dir):
    assert os.path.exists(os.path.join(trained_dir, "model.mpf1"))
    log = read_rows(os.path.join(trained_dir, "training_log.csv"))
    assert log[0] == ["epoch", "train_loss", "val_loss", "lr", "elapsed_s"]
    assert len(log) == 3
    with open(os.path.join(trained_dir, "train_summary.json"),
              encoding="utf-8") as fh:
        summary = json.load(fh)
    assert summary["param_count"] == 2_108_621
    assert summary["epochs_run"] == 2
    assert summary["train_examples"] > summary["val_examples"] > 0


def test_train_reruns_byte_identical(tmp_path, manifest_path, trained_dir):
    out = tmp_path / "again"
    code = main([
        "train", "--manifest", manifest_path, "--out-dir", str(out),
        "--kind", "fcnn", "--seed", "3", "--epochs", "2",
    ])
    assert code == 0
    first = open(os.path.join(trained_dir, "model.mpf1"), "rb").read()
    assert (out / "model.mpf1").read_bytes() == first
    strip = lambda rows: [r[:-1] for r in rows]
    assert strip(read_rows(out / "training_log.csv")) == strip(
        read_rows(os.path.join(trained_dir, "training_log.csv")))


def test_degrade_enhance_round_trip(tmp_path, corpus_dir, trained_dir, capsys):
    clean_wav = os.path.join(corpus_dir, "wav", "utt05.wav")
    deg = tmp_path / "deg"
    code = main(["degrade", "--out-dir", str(deg), "--preset", "q_low",
                 "--format", "float32", clean_wav])
    assert code == 0
    coded_path = str(deg / "utt05.coded.wav")
    assert capsys.readouterr().out.strip() == coded_path

    enh = tmp_path / "enh"
    model = os.path.join(trained_dir, "model.mpf1")
    code = main(["enhance", "--out-dir", str(enh), "--model", model,
                 "--format", "float32", coded_path])
    assert code == 0
    out_path = str(enh / "utt05.coded.enhanced.wav")
    assert capsys.readouterr().out.strip() == out_path

    coded = read_wav(coded_path)
    enhanced = read_wav(out_path)
    assert len(enhanced) == len(coded)
    assert np.all(np.isfinite(enhanced.samples))
    assert np.max(np.abs(enhanced.samples)) > 0


def test_enhance_keeps_passthrough_band_close(tmp_path, corpus_dir,
                                              trained_dir):
    """The 6.4 to 7 kHz band of the output stays within resynthesis
    leakage of the coded input even though the lower band is reshaped."""
    from maskpf.dsp import stft

    clean_wav = os.path.join(corpus_dir, "wav", "utt04.wav")
    deg = tmp_path / "deg"
    assert main(["degrade", "--out-dir", str(deg), "--preset", "q_mid",
                 "--format", "float32", clean_wav]) == 0
    coded_path = str(deg / "utt04.coded.wav")
    enh = tmp_path / "enh"
    assert main(["enhance", "--out-dir", str(enh), "--model",
                 os.path.join(trained_dir, "model.mpf1"),
                 "--format", "float32", coded_path]) == 0
    a = stft(read_wav(coded_path))
    b = stft(read_wav(str(enh / "utt04.coded.enhanced.wav")))
    t = min(a.n_frames, b.n_frames)
    hi = slice(a.config.n_processed, 225)
    e_in = (np.abs(a.frames[1:t - 1, hi]) ** 2).sum()
    e_out = (np.abs(b.frames[1:t - 1, hi]) ** 2).sum()
    assert e_in > 0
    assert abs(e_out / e_in - 1.0) < 0.05


def test_degrade_and_enhance_reruns_byte_identical(tmp_path, corpus_dir,
                                                   trained_dir):
    clean_wav = os.path.join(corpus_dir, "wav", "utt03.wav")
    model = os.path.join(trained_dir, "model.mpf1")
    blobs = {"deg": [], "enh": []}
    for tag in ("one", "two"):
        deg = tmp_path / f"deg_{tag}"
        assert main(["degrade", "--out-dir", str(deg), "--preset", "q_mid",
                     clean_wav]) == 0
        coded = deg / "utt03.coded.wav"
        blobs["deg"].append(coded.read_bytes())
        enh = tmp_path / f"enh_{tag}"
        assert main(["enhance", "--out-dir", str(enh), "--model", model,
                     str(coded)]) == 0
        blobs["enh"].append((enh / "utt03.coded.enhanced.wav").read_bytes())
    assert blobs["deg"][0] == blobs["deg"][1]
    assert blobs["enh"][0] == blobs["enh"][1]


def test_eval_reports(tmp_path, manifest_path, trained_dir, capsys):
    out = tmp_path / "eval"
    model = os.path.join(trained_dir, "model.mpf1")
    code = main(["eval", "--manifest", manifest_path, "--out-dir", str(out),
                 "--split", "val", "--model", model])
    assert code == 0
    assert "improvement" in capsys.readouterr().out
    rows = read_rows(out / "eval_utterances.csv")
    assert len(rows) == 3
    per_utt = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
    summary = dict(read_rows(out / "eval_summary.csv")[1:])
    assert summary["utterances"] == "2"
    assert abs(float(summary["mean_lsd_improvement_db"])
               - per_utt[:, 2].mean()) < 1e-5
    for r in rows[1:]:
        assert abs(float(r[2]) - float(r[3]) - float(r[4])) < 2e-6


def test_eval_jobs_parity(tmp_path, manifest_path, trained_dir):
    model = os.path.join(trained_dir, "model.mpf1")
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out, jobs in ((a, "1"), (b, "2")):
        assert main(["eval", "--manifest", manifest_path, "--out-dir", str(out),
                     "--split", "val", "--model", model,
                     "--jobs", jobs]) == 0
    assert (a / "eval_utterances.csv").read_bytes() == \
        (b / "eval_utterances.csv").read_bytes()


def test_missing_model_is_data_error(tmp_path, manifest_path, capsys):
    code = main(["eval", "--manifest", manifest_path,
                 "--out-dir", str(tmp_path / "x"), "--split", "val",
                 "--model", str(tmp_path / "nope.mpf1")])
    assert code == 3
    assert "error" in capsys.readouterr().err


def test_empty_split_is_data_error(tmp_path, capsys):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text(json.dumps(
        {"clean": "wav/a.wav", "coded": "surrogate:q_low",
         "split": "train"}) + "\n")
    code = main(["stats", "--manifest", str(manifest),
                 "--out-dir", str(tmp_path / "o"), "--split", "test"])
    assert code == 3
    capsys.readouterr()


def test_malformed_manifest_is_data_error(tmp_path, capsys):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text("not json at all\n")
    code = main(["stats", "--manifest", str(manifest),
                 "--out-dir", str(tmp_path / "o")])
    assert code == 3
    capsys.readouterr()


def test_unknown_preset_is_usage_error(tmp_path, corpus_dir):
    clean_wav = os.path.join(corpus_dir, "wav", "utt00.wav")
    with pytest.raises(SystemExit) as exc:
        main(["degrade", "--out-dir", str(tmp_path / "o"),
              "--preset", "q_extreme", clean_wav])
    assert exc.value.code == 2


def test_stats_groups_by_source(tmp_path, corpus_dir):
    """Rougher surrogates shift mask mass into the above-2 buckets."""
    manifest = tmp_path / "m.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for i, preset in enumerate(["q_low", "q_low", "q_high", "q_high"]):
            wav = os.path.join(corpus_dir, "wav", f"utt0{i}.wav")
            fh.write(json.dumps({"clean": wav, "coded": f"surrogate:{preset}",
                                 "split": "train"}) + "\n")
    out = tmp_path / "stats"
    assert main(["stats", "--manifest", str(manifest),
                 "--out-dir", str(out)]) == 0
    rows = read_rows(out / "stats.csv")
    assert rows[0] == ["source", "bucket", "count", "fraction"]
    assert len(rows) == 9
    tail = {}
    for source in ("q_low", "q_high"):
        part = [r for r in rows[1:] if r[0] == source]
        assert len(part) == 4
        assert abs(sum(float(r[3]) for r in part) - 1.0) < 1e-9
        tail[source] = sum(float(r[3]) for r in part
                           if r[1] in ("2..5", "5..inf"))
    assert tail["q_low"] > tail["q_high"]


def test_config_file_fills_defaults_but_flags_win(tmp_path, manifest_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bounds": "1,2", "split": "val"}))
    out = tmp_path / "oracle"
    code = main(["oracle", "--manifest", manifest_path, "--out-dir", str(out),
                 "--config", str(cfg), "--split", "test"])
    assert code == 0
    rows = read_rows(out / "oracle.csv")
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    header = read_header(out)
    assert header["args"]["bounds"] == "1,2"
    assert header["args"]["split"] == "test"


def test_config_rejects_bad_values(tmp_path, manifest_path, capsys):
    out = str(tmp_path / "o")
    cases = [
        {"bogus": 1},          # not a flag of stats
        {"split": "nope"},     # fails the choices check
        {"jobs": "three"},     # wrong type
        {"jobs": 2.5},         # not an integer
        ["split", "val"],      # not an object
    ]
    for i, payload in enumerate(cases):
        cfg = tmp_path / f"cfg{i}.json"
        cfg.write_text(json.dumps(payload))
        assert main(["stats", "--manifest", manifest_path,
                     "--out-dir", out, "--config", str(cfg)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["stats", "--manifest", manifest_path,
                 "--out-dir", out, "--config", str(bad)]) == 2
    assert main(["stats", "--manifest", manifest_path, "--out-dir", out,
                 "--config", str(tmp_path / "missing.json")]) == 2
    capsys.readouterr()


def test_degrade_seed_offsets_jitter(tmp_path, corpus_dir):
    clean_wav = os.path.join(corpus_dir, "wav", "utt01.wav")
    outs = {}
    for name, extra in (("plain", []), ("zero", ["--seed", "0"]),
                        ("five", ["--seed", "5"]), ("five2", ["--seed", "5"])):
        out = tmp_path / name
        assert main(["degrade", "--out-dir", str(out), "--preset", "q_mid",
                     *extra, clean_wav]) == 0
        outs[name] = (out / "utt01.coded.wav").read_bytes()
    assert outs["plain"] == outs["zero"]
    assert outs["five"] == outs["five2"]
    assert outs["five"] != outs["plain"]

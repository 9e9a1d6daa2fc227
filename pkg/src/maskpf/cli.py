"""Command-line front end.

Subcommands:

  stats    mask-value histogram of a manifest split
  oracle   distortion left by bounded oracle masks, averaged over a split
  train    fit an estimator on the train/val splits of a manifest
  enhance  run a trained model over degraded WAV files
  eval     compare degraded vs. enhanced quality on a split
  degrade  apply a surrogate-degradation preset to clean WAV files

Every command writes its outputs plus a run_header.json (the resolved
arguments, package version, and kernel backend; no timestamps) into
--out-dir. A JSON file passed as --config supplies defaults for the
optional flags of the chosen subcommand; flags given on the command line
win. Exit codes: 0 ok, 2 bad configuration or arguments, 3 bad data,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .audio_io import read_wav, write_wav
from .degrade import (
    PRESETS,
    SURROGATE_PREFIX,
    ManifestEntry,
    get_profile,
    load_manifest,
    resolve_pair,
    split_entries,
    surrogate_code,
)
from .dsp import AudioBuffer, band_limit, istft, level_normalize, stft
from .errors import ConfigError, DataError, MaskpfError
from .features import analyze_pair, build_dataset, infer_mask, input_stats
from .mask import (
    apply_mask,
    compute_irm,
    envelope_mask,
    mask_histogram,
    time_domain_frames,
)
from .metrics import log_spectral_distance, lsd_from_mags, segmental_snr
from .nn.io import load_model, save_model
from .nn.kernels import active_backend
from .nn.models import MODEL_KINDS
from .nn.train import TrainConfig, train_model


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_header(out_dir: str, command: str, args: argparse.Namespace) -> None:
    payload = {
        "command": command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "package_version": __version__,
        "kernel_backend": active_backend(),
    }
    with open(os.path.join(out_dir, "run_header.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _map_ordered(fn, items: list, jobs: int) -> list:
    """Apply fn to items, optionally across processes; results keep the
    input order regardless of completion order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _load_split(args) -> tuple[list[ManifestEntry], str]:
    entries = load_manifest(args.manifest)
    selected = split_entries(entries, args.split)
    if not selected:
        raise DataError(f"manifest has no entries in split {args.split!r}")
    return selected, os.path.dirname(os.path.abspath(args.manifest))


# ------------------------------------------------------------------ stats --


def _stats_worker(job: tuple[ManifestEntry, str]) -> np.ndarray:
    entry, manifest_dir = job
    clean, coded = resolve_pair(entry, manifest_dir)
    pair = analyze_pair(clean, coded)
    hist = mask_histogram([compute_irm(pair.clean_spec, pair.coded_spec)])
    return np.append(hist.counts, hist.total)


def _source_key(entry: ManifestEntry) -> str:
    """Group label for a pair: the surrogate preset name, or "file"."""
    if entry.coded.startswith(SURROGATE_PREFIX):
        return entry.coded[len(SURROGATE_PREFIX):]
    return "file"


def cmd_stats(args) -> int:
    entries, manifest_dir = _load_split(args)
    out_dir = _ensure_out(args.out_dir)
    results = _map_ordered(
        _stats_worker, [(e, manifest_dir) for e in entries], args.jobs)
    from .mask import HISTOGRAM_LABELS

    groups: dict[str, np.ndarray] = {}
    members: dict[str, int] = {}
    for entry, result in zip(entries, results):
        key = _source_key(entry)
        groups[key] = groups.get(key, 0) + result
        members[key] = members.get(key, 0) + 1
    rows = []
    for key in sorted(groups):
        counts, total = groups[key][:-1], int(groups[key][-1])
        rows.extend(
            [key, label, int(c), _fmt(c / total)]
            for label, c in zip(HISTOGRAM_LABELS, counts)
        )
        print(f"stats: {key}: {members[key]} utterances, {total} mask values")
    _write_csv(os.path.join(out_dir, "stats.csv"),
               ["source", "bucket", "count", "fraction"], rows)
    _write_header(out_dir, "stats", args)
    return 0


# ----------------------------------------------------------------- oracle --


def _parse_bounds(text: str) -> list[float]:
    out = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            out.append(float(token))
        except ValueError as exc:
            raise ConfigError(f"bad bound {token!r}") from exc
        if out[-1] <= 0:
            raise ConfigError("bounds must be positive")
    if not out:
        raise ConfigError("no bounds given")
    return out


def cmd_oracle(args) -> int:
    entries, manifest_dir = _load_split(args)
    bounds = _parse_bounds(args.bounds)
    out_dir = _ensure_out(args.out_dir)
    jobs = [(e, manifest_dir, bounds, args.envelope) for e in entries]
    results = _map_ordered(_oracle_worker_full, jobs, args.jobs)
    stacked = np.array(results)
    means = stacked.mean(axis=0)
    labels = [("inf" if np.isinf(b) else f"{b:g}") for b in bounds]
    if args.envelope:
        labels.append("envelope")
    rows = [[label, _fmt(v)] for label, v in zip(labels, means)]
    _write_csv(os.path.join(out_dir, "oracle.csv"), ["bound", "lsd_db"], rows)
    _write_header(out_dir, "oracle", args)
    for label, v in zip(labels, means):
        print(f"oracle bound {label}: lsd {_fmt(v)} dB")
    return 0


def _oracle_worker_full(job) -> list[float]:
    entry, manifest_dir, bounds, with_envelope = job
    clean, coded = resolve_pair(entry, manifest_dir)
    pair = analyze_pair(clean, coded)
    from .mask import oracle_sweep

    sweep = oracle_sweep(pair.clean_spec, pair.coded_spec, tuple(bounds))
    values = [lsd for _, lsd in sweep]
    if with_envelope:
        n = pair.coded_spec.config.n_processed
        length = min(len(clean), len(coded))
        clean_td = time_domain_frames(clean.samples[:length])
        coded_td = time_domain_frames(coded.samples[:length])
        emask = envelope_mask(
            pair.clean_spec, pair.coded_spec, clean_td, coded_td)
        enhanced = emask.values * pair.coded_spec.magnitudes(n)
        values.append(
            lsd_from_mags(enhanced, pair.clean_spec.magnitudes(n)))
    return values


# ------------------------------------------------------------------ train --


def cmd_train(args) -> int:
    entries = load_manifest(args.manifest)
    train_entries = split_entries(entries, "train")
    val_entries = split_entries(entries, "val")
    if not train_entries or not val_entries:
        raise DataError("training requires non-empty train and val splits")
    manifest_dir = os.path.dirname(os.path.abspath(args.manifest))
    out_dir = _ensure_out(args.out_dir)
    train_pairs = _map_ordered(_analyze_worker,
                               [(e, manifest_dir) for e in train_entries],
                               args.jobs)
    val_pairs = _map_ordered(_analyze_worker,
                             [(e, manifest_dir) for e in val_entries],
                             args.jobs)
    stats = input_stats(train_pairs)
    config = TrainConfig(
        kind=args.kind,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        patience=args.patience,
        min_delta=args.min_delta,
        seed=args.seed,
    )
    train_data = build_dataset(train_pairs, args.kind, stats)
    val_data = build_dataset(val_pairs, args.kind, stats)
    result = train_model(config, train_data, val_data)

    model_path = os.path.join(out_dir, "model.mpf1")
    save_model(model_path, result.model, stats, config)
    log_rows = [
        [log.epoch, f"{log.train_loss:.8f}", f"{log.val_loss:.8f}",
         f"{log.lr:.6g}", f"{log.elapsed_s:.3f}"]
        for log in result.history
    ]
    _write_csv(os.path.join(out_dir, "training_log.csv"),
               ["epoch", "train_loss", "val_loss", "lr", "elapsed_s"], log_rows)
    summary = {
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "epochs_run": len(result.history),
        "val_evaluations": result.val_evaluations,
        "stopped_early": result.stopped_early,
        "param_count": result.model.param_count(),
        "train_examples": len(train_data),
        "val_examples": len(val_data),
    }
    with open(os.path.join(out_dir, "train_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_header(out_dir, "train", args)
    print(f"train: best epoch {result.best_epoch} "
          f"val_loss {result.best_val_loss:.6f} -> {model_path}")
    return 0


def _analyze_worker(job):
    entry, manifest_dir = job
    clean, coded = resolve_pair(entry, manifest_dir)
    return analyze_pair(clean, coded)


# ---------------------------------------------------------------- enhance --


_WORKER_MODEL = None


def _enhance_one(model, stats, coded: AudioBuffer) -> AudioBuffer:
    spec = stft(coded)
    mask = infer_mask(model, stats, spec)
    out = istft(apply_mask(spec, mask))
    padded = np.zeros(len(coded))
    padded[: len(out)] = out.samples
    return AudioBuffer(padded, label="enhanced")


def _enhance_worker(job) -> str:
    in_path, out_dir, model_path, fmt = job
    model, stats, _ = load_model(model_path)
    coded = band_limit(read_wav(in_path, label="coded"))
    enhanced = _enhance_one(model, stats, coded)
    stem = os.path.splitext(os.path.basename(in_path))[0]
    out_path = os.path.join(out_dir, f"{stem}.enhanced.wav")
    write_wav(out_path, enhanced, fmt)
    return out_path


def cmd_enhance(args) -> int:
    out_dir = _ensure_out(args.out_dir)
    jobs = [(p, out_dir, args.model, args.format) for p in args.inputs]
    if args.jobs <= 1:
        model, stats, _ = load_model(args.model)
        written = []
        for in_path in args.inputs:
            coded = band_limit(read_wav(in_path, label="coded"))
            enhanced = _enhance_one(model, stats, coded)
            stem = os.path.splitext(os.path.basename(in_path))[0]
            out_path = os.path.join(out_dir, f"{stem}.enhanced.wav")
            write_wav(out_path, enhanced, args.format)
            written.append(out_path)
    else:
        written = _map_ordered(_enhance_worker, jobs, args.jobs)
    _write_header(out_dir, "enhance", args)
    for path in written:
        print(path)
    return 0


# ------------------------------------------------------------------- eval --


def _eval_worker(job) -> list:
    entry, manifest_dir, model_path = job
    model, stats, _ = load_model(model_path)
    clean, coded = resolve_pair(entry, manifest_dir)
    pair = analyze_pair(clean, coded)
    mask = infer_mask(model, stats, pair.coded_spec)
    enhanced = istft(apply_mask(pair.coded_spec, mask))
    n = len(enhanced)
    clean_t = AudioBuffer(clean.samples[:n])
    coded_t = AudioBuffer(coded.samples[:n])
    lsd_coded = log_spectral_distance(clean_t, coded_t)
    lsd_enh = log_spectral_distance(clean_t, enhanced)
    seg_coded = segmental_snr(clean_t, coded_t)
    seg_enh = segmental_snr(clean_t, enhanced)
    return [entry.clean, lsd_coded, lsd_enh, lsd_coded - lsd_enh,
            seg_coded, seg_enh]


def cmd_eval(args) -> int:
    entries, manifest_dir = _load_split(args)
    out_dir = _ensure_out(args.out_dir)
    jobs = [(e, manifest_dir, args.model) for e in entries]
    rows = _map_ordered(_eval_worker, jobs, args.jobs)
    table = [
        [i, r[0]] + [_fmt(v) for v in r[1:]] for i, r in enumerate(rows)
    ]
    _write_csv(
        os.path.join(out_dir, "eval_utterances.csv"),
        ["index", "clean", "lsd_coded_db", "lsd_enhanced_db",
         "lsd_improvement_db", "segsnr_coded_db", "segsnr_enhanced_db"],
        table,
    )
    values = np.array([r[1:] for r in rows], dtype=np.float64)
    means = values.mean(axis=0)
    summary_rows = [
        ["mean_lsd_coded_db", _fmt(means[0])],
        ["mean_lsd_enhanced_db", _fmt(means[1])],
        ["mean_lsd_improvement_db", _fmt(means[2])],
        ["mean_segsnr_coded_db", _fmt(means[3])],
        ["mean_segsnr_enhanced_db", _fmt(means[4])],
        ["utterances", str(len(rows))],
    ]
    _write_csv(os.path.join(out_dir, "eval_summary.csv"),
               ["metric", "value"], summary_rows)
    _write_header(out_dir, "eval", args)
    print(f"eval: lsd {means[0]:.3f} -> {means[1]:.3f} dB "
          f"(improvement {means[2]:.3f}) over {len(rows)} utterances")
    return 0


# ---------------------------------------------------------------- degrade --


def _degrade_worker(job) -> str:
    in_path, out_dir, preset, fmt, seed_offset = job
    profile = get_profile(preset)
    if seed_offset:
        profile = replace(profile, seed=profile.seed + seed_offset)
    clean = read_wav(in_path, label="clean")
    clean = band_limit(clean)
    clean, _ = level_normalize(clean)
    coded = surrogate_code(clean, profile)
    stem = os.path.splitext(os.path.basename(in_path))[0]
    out_path = os.path.join(out_dir, f"{stem}.coded.wav")
    write_wav(out_path, coded, fmt)
    return out_path


def cmd_degrade(args) -> int:
    get_profile(args.preset)
    out_dir = _ensure_out(args.out_dir)
    jobs = [(p, out_dir, args.preset, args.format, args.seed)
            for p in args.inputs]
    written = _map_ordered(_degrade_worker, jobs, args.jobs)
    _write_header(out_dir, "degrade", args)
    for path in written:
        print(path)
    return 0


# ------------------------------------------------------------------ parse --


# Populated by build_parser: command -> {dest: argparse action} for the
# optional flags a --config file may supply.
_CONFIG_ACTIONS: dict[str, dict[str, argparse.Action]] = {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskpf",
        description="Mask-based spectral post-filter for degraded speech.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest: bool = True, seed_help: str | None = None):
        p.add_argument("--out-dir", required=True, help="output directory")
        p.add_argument("--config",
                       help="JSON file of defaults for this command's "
                            "optional flags; explicit flags win")
        p.add_argument("--seed", type=int, default=0,
                       help=seed_help or "recorded in the run header; this "
                       "command has no stochastic step")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes (default 1)")
        if manifest:
            p.add_argument("--manifest", required=True,
                           help="JSONL manifest of clean/coded pairs")

    p = sub.add_parser("stats", help="mask histogram over a split")
    add_common(p)
    p.add_argument("--split", default="train", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("oracle", help="bounded oracle-mask distortion sweep")
    add_common(p)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--bounds", default="1,2,5,inf",
                   help="comma-separated mask caps (default 1,2,5,inf)")
    p.add_argument("--envelope", action="store_true",
                   help="also report the cepstral-envelope oracle")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("train", help="fit an estimator")
    add_common(p, seed_help="weight initialization and batch shuffling seed")
    p.add_argument("--kind", default="fcnn", choices=list(MODEL_KINDS))
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--min-delta", type=float, default=1e-4)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="apply a trained model to WAV files")
    add_common(p, manifest=False)
    p.add_argument("--model", required=True, help="path to a .mpf1 model")
    p.add_argument("--format", default="pcm16", choices=["pcm16", "float32"])
    p.add_argument("inputs", nargs="+", help="degraded WAV files")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", help="score degraded vs enhanced on a split")
    add_common(p)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--model", required=True, help="path to a .mpf1 model")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("degrade", help="apply a surrogate-degradation preset")
    add_common(p, manifest=False,
               seed_help="offset added to the preset's jitter seed")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--format", default="pcm16", choices=["pcm16", "float32"])
    p.add_argument("inputs", nargs="+", help="clean WAV files")
    p.set_defaults(func=cmd_degrade)

    _CONFIG_ACTIONS.clear()
    for name, sp in sub.choices.items():
        _CONFIG_ACTIONS[name] = {
            a.dest: a
            for a in sp._actions
            if a.option_strings and not a.required
            and a.dest not in ("help", "config")
        }
    return parser


def _apply_config(args: argparse.Namespace, raw_argv: list[str]) -> None:
    """Fill optional flags from the JSON file named by --config.

    Keys use the flag's dest name (for example batch_size). A flag the
    user typed explicitly keeps its command-line value.
    """
    try:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ConfigError("config file must hold a JSON object")
    allowed = _CONFIG_ACTIONS[args.command]
    for key in sorted(loaded):
        if key not in allowed:
            raise ConfigError(
                f"config key {key!r} is not an optional flag of "
                f"{args.command!r}; have {sorted(allowed)}")
        action = allowed[key]
        flag = action.option_strings[-1]
        if any(tok == flag or tok.startswith(flag + "=") for tok in raw_argv):
            continue
        value = loaded[key]
        if action.nargs == 0:
            if not isinstance(value, bool):
                raise ConfigError(f"config key {key!r} must be a boolean")
        elif action.type in (int, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config key {key!r} must be a number")
            if action.type is int and float(value) != int(value):
                raise ConfigError(f"config key {key!r} must be an integer")
            value = action.type(value)
        elif not isinstance(value, str):
            raise ConfigError(f"config key {key!r} must be a string")
        if action.choices is not None and value not in action.choices:
            raise ConfigError(
                f"config key {key!r} must be one of {list(action.choices)}")
        setattr(args, action.dest, value)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    raw_argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(raw_argv)
    try:
        if getattr(args, "config", None):
            _apply_config(args, raw_argv)
        return args.func(args)
    except MaskpfError as exc:
        print(f"maskpf {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

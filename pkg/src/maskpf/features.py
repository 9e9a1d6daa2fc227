"""Feature windowing and dataset assembly for the estimators.

Inputs are normalized log magnitudes of the degraded signal. Each
estimator sees a causal context ending at the frame being predicted: the
dense net a flat stack of 4 frames, the recurrent net a 10-step sequence,
the conv net a 6-frame image. Frames before the start of the utterance
are filled by repeating the first frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import (
    DEFAULT_STFT,
    AudioBuffer,
    FeatureMatrix,
    NormStats,
    Spectrogram,
    compute_norm_stats,
    log_magnitude,
    normalize,
    stft,
)
from .errors import ConfigError, DataError
from .mask import MaskConfig, MaskMatrix, compute_irm, modified_mask
from .nn.models import CONTEXT_FRAMES, MODEL_KINDS
from .nn.train import Dataset


def context_history(features: np.ndarray, n_frames: int) -> np.ndarray:
    """Per-frame causal history, shape (T, n_frames, K), oldest first.

    Row t holds frames [t - n_frames + 1 .. t]; indices before 0 repeat
    frame 0.
    """
    if n_frames < 1:
        raise ConfigError("context must cover at least one frame")
    t_len = features.shape[0]
    idx = np.arange(t_len)[:, None] + np.arange(-n_frames + 1, 1)[None, :]
    return features[np.maximum(idx, 0)]


def model_inputs(kind: str, features: np.ndarray) -> np.ndarray:
    """Window normalized features into the shape one estimator consumes."""
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown estimator kind {kind!r}")
    hist = context_history(features, CONTEXT_FRAMES[kind])
    t_len = hist.shape[0]
    if kind == "fcnn":
        return hist.reshape(t_len, -1)
    if kind == "lstm":
        return hist
    return hist[:, None, :, :]  # (T, 1, frames, bins)


@dataclass
class UtterancePair:
    """Analysis products of one aligned clean/coded pair."""

    clean_spec: Spectrogram
    coded_spec: Spectrogram
    coded_logmag: FeatureMatrix

    @property
    def n_frames(self) -> int:
        return self.coded_spec.n_frames


def analyze_pair(clean: AudioBuffer, coded: AudioBuffer) -> UtterancePair:
    if len(clean) != len(coded):
        n = min(len(clean), len(coded))
        clean = AudioBuffer(clean.samples[:n], label=clean.label)
        coded = AudioBuffer(coded.samples[:n], label=coded.label)
    clean_spec = stft(clean)
    coded_spec = stft(coded)
    return UtterancePair(clean_spec, coded_spec, log_magnitude(coded_spec))


def input_stats(pairs: list[UtterancePair]) -> NormStats:
    """Normalization statistics over the degraded features of a split."""
    if not pairs:
        raise DataError("cannot compute stats from an empty split")
    return compute_norm_stats([p.coded_logmag for p in pairs])


def build_dataset(
    pairs: list[UtterancePair],
    kind: str,
    stats: NormStats,
    mask_config: MaskConfig = MaskConfig(),
) -> Dataset:
    """Stack windowed inputs, modified-mask targets, and degraded
    magnitudes across utterances, preserving utterance order."""
    if not pairs:
        raise DataError("no utterances to assemble")
    inputs, targets, mags = [], [], []
    n = DEFAULT_STFT.n_processed
    for pair in pairs:
        feats = normalize(pair.coded_logmag, stats).frames
        inputs.append(model_inputs(kind, feats))
        irm = compute_irm(pair.clean_spec, pair.coded_spec, mask_config)
        targets.append(modified_mask(irm, mask_config).values)
        mags.append(pair.coded_spec.magnitudes(n))
    return Dataset(
        np.concatenate(inputs, axis=0),
        np.concatenate(targets, axis=0),
        np.concatenate(mags, axis=0),
    )


def infer_mask(model, stats: NormStats, coded_spec: Spectrogram,
               batch_size: int = 256) -> MaskMatrix:
    """Run one estimator over an utterance's degraded spectrogram."""
    feats = normalize(log_magnitude(coded_spec), stats).frames
    x = model_inputs(model.kind, feats)
    return MaskMatrix(model.infer(x, batch_size=batch_size))

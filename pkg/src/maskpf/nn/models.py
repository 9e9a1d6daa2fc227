"""The three mask estimators.

All of them map a context of degraded log-magnitude frames to one mask
frame of 205 gains in (0, 2):

  fcnn  four stacked frames flattened to 820 inputs, two 1024-unit hidden
        layers with relu, batch norm, and dropout 0.2.
  lstm  ten-step sequences through LSTM(400) then LSTM(205), mask read
        from the last step via a dense layer.
  ced   six frames as a 1-channel image through a strided conv encoder
        (16/32/64/128 channels) and a mirrored transposed-conv decoder
        with skip concatenation, finished by a time-collapsing conv.

`param_count` counts every value stored in the model file (weights, biases,
and batch-norm running statistics, i.e. 4 values per normalized channel).
REFERENCE_PARAM_COUNTS holds the published totals these builds are checked
against: the fcnn total must match exactly, the other two to within 5%
(their reference tallies include framework bookkeeping that is not
reconstructible from the layer shapes alone).
"""

from __future__ import annotations

import numpy as np

from ..dsp import DEFAULT_STFT
from ..errors import ConfigError, DataError
from .layers import (
    BatchNorm,
    Conv2d,
    Deconv2d,
    Dense,
    Dropout,
    Elu,
    Layer,
    PadHighFreq,
    Relu,
    ScaledSigmoid,
    Sequential,
    zero_grads,
)
from .lstm import Lstm

N_BINS = DEFAULT_STFT.n_processed

MODEL_KINDS = ("fcnn", "lstm", "ced")

CONTEXT_FRAMES = {"fcnn": 4, "lstm": 10, "ced": 6}

MASK_SCALE = 2.0

REFERENCE_PARAM_COUNTS = {"fcnn": 2_108_621, "lstm": 1_468_120, "ced": 147_292}


class Model:
    """Shared plumbing: parameter namespaces, reseeding, counting."""

    kind: str = ""

    def _layers(self) -> list[tuple[str, Layer]]:
        raise NotImplementedError

    def _collect(self, getter) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, layer in self._layers():
            for key, arr in getter(layer).items():
                out[f"{name}.{key}"] = arr
        return out

    def params(self) -> dict[str, np.ndarray]:
        return self._collect(lambda l: l.params())

    def grads(self) -> dict[str, np.ndarray]:
        return self._collect(lambda l: l.grads())

    def state(self) -> dict[str, np.ndarray]:
        return self._collect(lambda l: l.state())

    def load_state(self, values: dict[str, np.ndarray]) -> None:
        state = self.state()
        missing = set(state) - set(values)
        extra = set(values) - set(state)
        if missing or extra:
            raise DataError(
                f"state mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, arr in state.items():
            src = np.asarray(values[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise DataError(
                    f"tensor {name}: shape {src.shape} != expected {arr.shape}")
            arr[...] = src

    def zero_grads(self) -> None:
        zero_grads([layer for _, layer in self._layers()])

    def reseed(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        for _, layer in self._layers():
            layer.reseed(rng)

    def param_count(self) -> int:
        return int(sum(arr.size for arr in self.state().values()))

    @property
    def context_frames(self) -> int:
        return CONTEXT_FRAMES[self.kind]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def infer(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Eval-mode forward in batches; returns stacked mask frames."""
        outs = [self.forward(x[i : i + batch_size], train=False)
                for i in range(0, x.shape[0], batch_size)]
        return np.concatenate(outs, axis=0)


class FcnnModel(Model):
    kind = "fcnn"

    def __init__(self, rng: np.random.Generator, n_bins: int = N_BINS,
                 dropout: float = 0.2):
        n_in = n_bins * CONTEXT_FRAMES["fcnn"]
        drop_rng = np.random.default_rng(rng.integers(2**63))
        self.net = Sequential([
            ("dense1", Dense(n_in, 1024, rng)),
            ("relu1", Relu()),
            ("bn1", BatchNorm(1024)),
            ("drop1", Dropout(dropout, drop_rng)),
            ("dense2", Dense(1024, 1024, rng)),
            ("relu2", Relu()),
            ("bn2", BatchNorm(1024)),
            ("drop2", Dropout(dropout, drop_rng)),
            ("dense3", Dense(1024, n_bins, rng)),
            ("sig", ScaledSigmoid(MASK_SCALE)),
        ])

    def _layers(self):
        return self.net.named_layers

    def forward(self, x, train=False):
        return self.net.forward(x, train=train)

    def backward(self, gy):
        return self.net.backward(gy)


class LstmModel(Model):
    kind = "lstm"

    def __init__(self, rng: np.random.Generator, n_bins: int = N_BINS,
                 dropout: float = 0.1, recurrent_dropout: float = 0.2):
        self.lstm1 = Lstm(n_bins, 400, rng, dropout, recurrent_dropout)
        self.lstm2 = Lstm(400, n_bins, rng, dropout, recurrent_dropout)
        self.head = Dense(n_bins, n_bins, rng)
        self.sig = ScaledSigmoid(MASK_SCALE)

    def _layers(self):
        return [("lstm1", self.lstm1), ("lstm2", self.lstm2),
                ("head", self.head), ("sig", self.sig)]

    def reseed(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        self.lstm1.reseed(rng)
        self.lstm2.reseed(rng)

    def forward(self, x, train=False):
        if x.ndim != 3:
            raise ConfigError("recurrent estimator expects (N, T, D) input")
        seq = self.lstm2.forward(self.lstm1.forward(x, train), train)
        self._t_len = seq.shape[1]
        return self.sig.forward(self.head.forward(seq[:, -1], train), train)

    def backward(self, gy):
        g_last = self.head.backward(self.sig.backward(gy))
        g_seq = np.zeros((gy.shape[0], self._t_len, g_last.shape[1]))
        g_seq[:, -1] = g_last
        return self.lstm1.backward(self.lstm2.backward(g_seq))


class CedModel(Model):
    """Convolutional encoder-decoder with skip concatenation.

    Time axis H runs over the 6 context frames, frequency axis W over the
    205 bins. Encoder kernels are 2x3 with stride (1, 2); each decoder
    stage upsamples back, zero-pads the high-frequency edge to its
    encoder partner's width, and concatenates [decoder, encoder] along
    channels. A final 6x1 conv collapses the time axis.
    """

    kind = "ced"

    def __init__(self, rng: np.random.Generator, n_bins: int = N_BINS):
        k, s = (2, 3), (1, 2)
        self.enc = []
        for i, (ci, co) in enumerate([(1, 16), (16, 32), (32, 64), (64, 128)], 1):
            self.enc.append((f"enc{i}", Conv2d(ci, co, k, s, rng),
                             BatchNorm(co), Elu()))
        self.dec = []
        for i, (ci, co) in enumerate([(128, 64), (128, 32), (64, 16), (32, 1)], 1):
            self.dec.append((f"dec{i}", Deconv2d(ci, co, k, s, rng),
                             BatchNorm(co), Elu()))
        self.pads = [PadHighFreq(0) for _ in range(3)]  # widths set per forward
        self.head = Conv2d(1, 1, (CONTEXT_FRAMES["ced"], 1), (1, 1), rng)
        self.sig = ScaledSigmoid(MASK_SCALE)

    def _layers(self):
        out: list[tuple[str, Layer]] = []
        for name, conv, bn, act in self.enc:
            out += [(name, conv), (f"{name}_bn", bn), (f"{name}_act", act)]
        for name, conv, bn, act in self.dec:
            out += [(name, conv), (f"{name}_bn", bn), (f"{name}_act", act)]
        out.append(("head", self.head))
        out.append(("sig", self.sig))
        return out

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ConfigError("conv estimator expects (N, 1, T, F) input")
        skips = []
        h = x
        for _, conv, bn, act in self.enc:
            h = act.forward(bn.forward(conv.forward(h, train), train), train)
            skips.append(h)
        # decoder pairs with encoder outputs 3, 2, 1 (0-indexed 2, 1, 0)
        self._skip_channels = []
        for i, (_, conv, bn, act) in enumerate(self.dec):
            h = act.forward(bn.forward(conv.forward(h, train), train), train)
            if i < 3:
                partner = skips[2 - i]
                self.pads[i].target_width = partner.shape[-1]
                h = self.pads[i].forward(h, train)
                self._skip_channels.append(h.shape[1])
                h = np.concatenate([h, partner], axis=1)
        y = self.head.forward(h, train)
        n = y.shape[0]
        return self.sig.forward(y.reshape(n, -1), train)

    def backward(self, gy):
        n = gy.shape[0]
        g = self.sig.backward(gy).reshape(n, 1, 1, -1)
        g = self.head.backward(g)
        skip_grads: list[np.ndarray | None] = [None, None, None]
        for i in range(3, -1, -1):
            _, conv, bn, act = self.dec[i]
            if i < 3:
                dch = self._skip_channels[i]
                skip_grads[2 - i] = g[:, dch:]
                g = self.pads[i].backward(g[:, :dch])
            g = conv.backward(bn.backward(act.backward(g)))
        for i in range(3, -1, -1):
            _, conv, bn, act = self.enc[i]
            if i < 3:
                g = g + skip_grads[i]
            g = conv.backward(bn.backward(act.backward(g)))
        return g


def build_model(kind: str, seed: int, n_bins: int = N_BINS) -> Model:
    """Construct a freshly initialized estimator.

    The seed fixes both the weight init and the dropout stream, so two
    builds with the same seed are bit-identical.
    """
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown estimator kind {kind!r}; have {MODEL_KINDS}")
    ss = np.random.SeedSequence([seed, MODEL_KINDS.index(kind)])
    init_seed, drop_seed = ss.spawn(2)
    rng = np.random.default_rng(init_seed)
    if kind == "fcnn":
        model: Model = FcnnModel(rng, n_bins)
    elif kind == "lstm":
        model = LstmModel(rng, n_bins)
    else:
        model = CedModel(rng, n_bins)
    model.reseed(int(np.random.default_rng(drop_seed).integers(2**31)))
    return model

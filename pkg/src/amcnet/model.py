"""The modulation classifier network and its checkpoint format.

The forward path is: adaptive spectrum correction (ACM), multi-scale I/Q
convolution (MSM), a three-layer convolutional backbone, multi-head
self-attention fusion (FFM) and a pooled MLP classifier. Each of the three
named modules can be switched off independently; the switches gate both
parameter allocation and the forward pass, so ablated models are strict
sub-networks of the full one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .spectrum import SpectrumPair, dft, idft
from .tensor import ConfigError, ShapeError, Tensor

__all__ = ["ModelConfig", "AmcNetModel", "save_model", "load_model"]

CHECKPOINT_MAGIC = b"AMCM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the network; every dimension the layers need."""

    sequence_length: int = 128
    num_classes: int = 11
    mlp_hidden: int = 48
    msm_filters_per_kernel: int = 12
    msm_kernel_lengths: tuple[int, ...] = (3, 5, 7)
    backbone_channels: tuple[int, ...] = (64, 128, 256)
    heads: int = 2
    classifier_hidden: tuple[int, ...] = (512, 256)
    use_acm: bool = True
    use_msm: bool = True
    use_ffm: bool = True

    def __post_init__(self):
        dims = (
            self.sequence_length,
            self.num_classes,
            self.mlp_hidden,
            self.msm_filters_per_kernel,
            self.heads,
            *self.msm_kernel_lengths,
            *self.backbone_channels,
            *self.classifier_hidden,
        )
        if any(d <= 0 for d in dims):
            raise ConfigError(f"all config dimensions must be positive: {self}")
        if any(k % 2 == 0 for k in self.msm_kernel_lengths):
            raise ConfigError(f"kernel lengths must be odd: {self.msm_kernel_lengths}")
        if self.backbone_channels[-1] % self.heads:
            raise ConfigError(
                f"{self.backbone_channels[-1]} channels not divisible by {self.heads} heads"
            )

    @property
    def mlp_dims(self) -> tuple[int, int, int]:
        # the spectrum MLPs map whole length-L bins, tying their width to L
        return (self.sequence_length, self.mlp_hidden, self.sequence_length)

    @property
    def lifted_channels(self) -> int:
        return len(self.msm_kernel_lengths) * self.msm_filters_per_kernel

    @property
    def head_dim(self) -> int:
        return self.backbone_channels[-1] // self.heads

    @property
    def classifier_dims(self) -> tuple[int, ...]:
        return (*self.classifier_hidden, self.num_classes)


class AmcNetModel:
    """Parameter set and forward pass of the network.

    Parameters are held in an ordered name -> Tensor map; batch-norm running
    moments live in a parallel ``state`` map of plain arrays (they are saved
    with checkpoints but are not learned parameters). A model is constructed
    with zero weights, unit batch-norm gains and identity running moments;
    call :func:`amcnet.training.xavier_init` before training.
    """

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.training = True
        self.params: dict[str, Tensor] = {}
        self.state: dict[str, np.ndarray] = {}
        self._allocate()
        self.num_parameters = self.parameter_count()

    # ------------------------------------------------------------------
    # allocation

    def _param(self, name: str, shape: tuple[int, ...], fill: float = 0.0) -> None:
        data = np.full(shape, fill, dtype=self.dtype)
        self.params[name] = Tensor(data, requires_grad=True, dtype=self.dtype)

    def _allocate(self) -> None:
        cfg = self.config
        length = cfg.sequence_length
        if cfg.use_acm:
            for half in ("re", "im"):
                self._param(f"acm.{half}.w1", (cfg.mlp_hidden, length))
                self._param(f"acm.{half}.b1", (cfg.mlp_hidden,))
                self._param(f"acm.{half}.w2", (length, cfg.mlp_hidden))
                self._param(f"acm.{half}.b2", (length,))
        if cfg.use_msm:
            for k in cfg.msm_kernel_lengths:
                f = cfg.msm_filters_per_kernel
                self._param(f"msm.k{k}.w", (f, 1, 2, k))
                self._param(f"msm.k{k}.b", (f,))
                self._param(f"msm.k{k}.gamma", (f,), fill=1.0)
                self._param(f"msm.k{k}.beta", (f,))
                self.state[f"msm.k{k}.running_mean"] = np.zeros(f, dtype=np.float64)
                self.state[f"msm.k{k}.running_var"] = np.ones(f, dtype=np.float64)
        else:
            self._param("lift.w", (cfg.lifted_channels, 1, 2, 1))
            self._param("lift.b", (cfg.lifted_channels,))
        chans = (cfg.lifted_channels, *cfg.backbone_channels)
        for i in range(len(cfg.backbone_channels)):
            self._param(f"bb.{i}.w", (chans[i + 1], chans[i], 3))
            self._param(f"bb.{i}.b", (chans[i + 1],))
        if cfg.use_ffm:
            for h in range(cfg.heads):
                for proj in ("q", "k", "v"):
                    self._param(f"ffm.h{h}.w{proj}", (cfg.head_dim, chans[-1]))
                    self._param(f"ffm.h{h}.b{proj}", (cfg.head_dim,))
        dims = (chans[-1], *cfg.classifier_dims)
        for i in range(len(cfg.classifier_dims)):
            self._param(f"cls.{i}.w", (dims[i + 1], dims[i]))
            self._param(f"cls.{i}.b", (dims[i + 1],))

    # ------------------------------------------------------------------
    # bookkeeping

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        """Number of learnable scalars (running moments excluded)."""
        return sum(p.data.size for p in self.params.values())

    def parameter_breakdown(self) -> dict[str, int]:
        groups: dict[str, int] = {}
        for name, p in self.params.items():
            top = name.split(".", 1)[0]
            groups[top] = groups.get(top, 0) + p.data.size
        return groups

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def train(self) -> "AmcNetModel":
        self.training = True
        return self

    def eval(self) -> "AmcNetModel":
        self.training = False
        return self

    def snapshot(self) -> dict[str, np.ndarray]:
        snap = {name: p.data.copy() for name, p in self.params.items()}
        snap.update({f"state:{k}": v.copy() for k, v in self.state.items()})
        return snap

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            p.data[...] = snap[name]
        for key, arr in self.state.items():
            arr[...] = snap[f"state:{key}"]

    # ------------------------------------------------------------------
    # forward pieces

    def _check_input(self, x: Tensor) -> None:
        cfg = self.config
        if x.data.ndim != 3 or x.shape[1] != 2:
            raise ShapeError(f"expected B x 2 x L input, got {x.shape}")
        if x.shape[2] != cfg.sequence_length:
            raise ShapeError(
                f"input length {x.shape[2]} does not match configured {cfg.sequence_length}"
            )

    def acm(self, x: Tensor) -> Tensor:
        """Gate the spectrum with two per-half MLPs and add the corrected signal back."""
        self._check_input(x)
        spec = dft(x)
        halves = {}
        for half, part in (("re", spec.real), ("im", spec.imag)):
            p = self.params
            hidden = T.relu(T.linear(part, p[f"acm.{half}.w1"], p[f"acm.{half}.b1"]))
            gate = T.tanh(T.linear(hidden, p[f"acm.{half}.w2"], p[f"acm.{half}.b2"]))
            halves[half] = T.mul(gate, part)
        corrected = idft(SpectrumPair(halves["re"], halves["im"]))
        return T.add(x, corrected)

    def _bn(self, name: str, x: Tensor) -> Tensor:
        return T.batchnorm(
            x,
            self.params[f"{name}.gamma"],
            self.params[f"{name}.beta"],
            self.state[f"{name}.running_mean"],
            self.state[f"{name}.running_var"],
            training=self.training,
        )

    def msm(self, x: Tensor) -> Tensor:
        """Three parallel two-row convolutions, batch-normed and concatenated."""
        self._check_input(x)
        batch, _, length = x.shape
        planes = T.reshape(x, (batch, 1, 2, length))
        branches = []
        for k in self.config.msm_kernel_lengths:
            conv = T.conv2d_iq(planes, self.params[f"msm.k{k}.w"], self.params[f"msm.k{k}.b"])
            branches.append(T.relu(self._bn(f"msm.k{k}", conv)))
        stacked = T.concat_channels(branches)
        return T.reshape(stacked, (batch, self.config.lifted_channels, length))

    def lift(self, x: Tensor) -> Tensor:
        """Bypass used when the MSM is disabled: a 2x1 channel-lifting convolution."""
        self._check_input(x)
        batch, _, length = x.shape
        planes = T.reshape(x, (batch, 1, 2, length))
        conv = T.conv2d_iq(planes, self.params["lift.w"], self.params["lift.b"])
        return T.reshape(conv, (batch, self.config.lifted_channels, length))

    def backbone(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.config.lifted_channels:
            raise ShapeError(
                f"backbone expects {self.config.lifted_channels} channels, got {x.shape[1]}"
            )
        out = x
        for i in range(len(self.config.backbone_channels)):
            out = T.relu(T.conv1d_same(out, self.params[f"bb.{i}.w"], self.params[f"bb.{i}.b"]))
        return out

    def ffm(self, x: Tensor) -> Tensor:
        """Multi-head self-attention over the length axis with a residual add."""
        cfg = self.config
        if x.shape[1] != cfg.backbone_channels[-1]:
            raise ShapeError(
                f"ffm expects {cfg.backbone_channels[-1]} channels, got {x.shape[1]}"
            )
        heads = []
        for h in range(cfg.heads):
            p = self.params
            q = T.channel_affine(x, p[f"ffm.h{h}.wq"], p[f"ffm.h{h}.bq"])
            k = T.channel_affine(x, p[f"ffm.h{h}.wk"], p[f"ffm.h{h}.bk"])
            v = T.channel_affine(x, p[f"ffm.h{h}.wv"], p[f"ffm.h{h}.bv"])
            heads.append(T.attention(q, k, v))
        fused = T.concat_channels(heads)
        return T.add(x, fused)

    def classify(self, features: Tensor) -> Tensor:
        """Global average pool over length, then the MLP head; returns raw logits."""
        pooled = T.global_avg_pool(features)
        out = pooled
        last = len(self.config.classifier_dims) - 1
        for i in range(len(self.config.classifier_dims)):
            out = T.linear(out, self.params[f"cls.{i}.w"], self.params[f"cls.{i}.b"])
            if i != last:
                out = T.relu(out)
        return out

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        cfg = self.config
        out = self.acm(x) if cfg.use_acm else x
        out = self.msm(out) if cfg.use_msm else self.lift(out)
        out = self.backbone(out)
        if cfg.use_ffm:
            out = self.ffm(out)
        return self.classify(out)

    __call__ = forward

    def predict_proba(self, x: Tensor) -> np.ndarray:
        """Softmax class distribution, computed without recording a graph."""
        was_training = self.training
        self.eval()
        try:
            with T.no_grad():
                return T.softmax_lastdim(self.forward(x)).data
        finally:
            self.training = was_training


# ---------------------------------------------------------------------------
# checkpoint serialization


_CONFIG_FIELDS = (
    "sequence_length",
    "num_classes",
    "mlp_hidden",
    "msm_filters_per_kernel",
    "msm_kernel_lengths",
    "backbone_channels",
    "heads",
    "classifier_hidden",
    "use_acm",
    "use_msm",
    "use_ffm",
)


def _config_to_text(cfg: ModelConfig) -> str:
    lines = []
    for name in _CONFIG_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = str(value)
        lines.append(f"{name}={text}")
    return "\n".join(lines) + "\n"


def _config_from_text(text: str) -> ModelConfig:
    values: dict[str, object] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, raw = line.partition("=")
        if key not in _CONFIG_FIELDS:
            raise ValueError(f"unknown checkpoint config key: {key!r}")
        if key in ("msm_kernel_lengths", "backbone_channels", "classifier_hidden"):
            values[key] = tuple(int(v) for v in raw.split(","))
        elif key.startswith("use_"):
            values[key] = raw == "true"
        else:
            values[key] = int(raw)
    missing = set(_CONFIG_FIELDS) - set(values)
    if missing:
        raise ValueError(f"checkpoint config missing keys: {sorted(missing)}")
    return ModelConfig(**values)  # type: ignore[arg-type]


def save_model(model: AmcNetModel, path) -> None:
    """Write an AMCM checkpoint: magic, version, config, then named f32 tensors."""
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    cfg_bytes = _config_to_text(model.config).encode("utf-8")
    blob += struct.pack("<I", len(cfg_bytes))
    blob += cfg_bytes
    entries = [(name, p.data) for name, p in model.params.items()]
    entries += [(f"state:{k}", v) for k, v in model.state.items()]
    for name, arr in entries:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_model(path) -> AmcNetModel:
    """Read an AMCM checkpoint back into a float32 model."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if bytes(view[:4]) != CHECKPOINT_MAGIC:
        raise ValueError(f"not a model checkpoint: bad magic {bytes(view[:4])!r}")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", view, 8)
    offset = 12 + cfg_len
    config = _config_from_text(bytes(view[12:offset]).decode("utf-8"))
    model = AmcNetModel(config)
    seen = set()
    try:
        while offset < len(blob):
            (name_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            name = bytes(view[offset:offset + name_len]).decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", view, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", view, offset)
            offset += 4 * rank
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            end = offset + 4 * count
            if end > len(blob):
                raise struct.error("tensor payload past end of file")
            arr = np.frombuffer(view[offset:end], dtype="<f4").reshape(dims)
            offset = end
            if name.startswith("state:"):
                key = name[len("state:"):]
                if key not in model.state:
                    raise ValueError(f"checkpoint state {key!r} not in model")
                model.state[key][...] = arr
            else:
                if name not in model.params:
                    raise ValueError(f"checkpoint tensor {name!r} not in model")
                if model.params[name].shape != tuple(dims):
                    raise ValueError(
                        f"checkpoint tensor {name!r} has shape {tuple(dims)}, "
                        f"model expects {model.params[name].shape}"
                    )
                model.params[name].data[...] = arr
            seen.add(name)
    except struct.error as exc:
        raise ValueError(f"truncated checkpoint: {exc}") from None
    expected = set(model.params) | {f"state:{k}" for k in model.state}
    if seen != expected:
        raise ValueError(f"checkpoint missing tensors: {sorted(expected - seen)}")
    return model

"""Synthetic I/Q capture generation and the AMCD dataset container format.

Eleven modulation families are produced at baseband: six linearly modulated
digital formats (root-raised-cosine shaped at 8 samples per symbol), two
continuous-phase digital formats, and three analog formats driven by a
low-pass filtered noise message. Captures pass through a channel model with
carrier frequency offset, sample rate offset and calibrated AWGN, and are
unit-power normalized before the noise is added so the requested SNR is the
actual signal-to-noise power ratio.
"""

from __future__ import annotations

import enum
import math
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CLASS_NAMES",
    "ModulationFormat",
    "ChannelParams",
    "Dataset",
    "DatasetFormatError",
    "DatasetTruncatedError",
    "DatasetLabelError",
    "constellation",
    "modulate",
    "apply_channel",
    "generate_example",
    "generate_dataset",
    "write_dataset",
    "read_dataset",
    "split_dataset",
]

# Canonical class order with stable integer codes 0-10. Labels everywhere
# index into the dataset's own class table, which lists a subset of these
# names in canonical-code order.
CLASS_NAMES = (
    "8PSK",
    "BPSK",
    "QAM16",
    "QAM64",
    "QPSK",
    "WBFM",
    "CPFSK",
    "GFSK",
    "AM-DSB",
    "AM-SSB",
    "PAM4",
)

DATASET_MAGIC = b"AMCD"
DATASET_VERSION = 1
HEADER_BYTES = 24

SAMPLES_PER_SYMBOL = 8
RRC_ROLLOFF = 0.35
RRC_SPAN = 8
FM_SAMPLE_RATE = 200e3
FM_DEVIATION = 75e3
AM_MOD_INDEX = 0.5
GFSK_BT = 0.5
FSK_INDEX = 0.5

MAX_CFO = 0.01
MAX_SRO_PPM = 500.0


class DatasetFormatError(ValueError):
    """The file is not an AMCD dataset or its header is inconsistent."""


class DatasetTruncatedError(DatasetFormatError):
    """The file ends before the header's example count is satisfied."""


class DatasetLabelError(DatasetFormatError):
    """An example's label does not index into the class table."""


class ModulationFormat(enum.IntEnum):
    """The eleven supported formats; values are the canonical class codes."""

    PSK8 = 0
    BPSK = 1
    QAM16 = 2
    QAM64 = 3
    QPSK = 4
    WBFM = 5
    CPFSK = 6
    GFSK = 7
    AM_DSB = 8
    AM_SSB = 9
    PAM4 = 10

    @property
    def label(self) -> str:
        return CLASS_NAMES[self.value]

    @classmethod
    def from_label(cls, label: str) -> "ModulationFormat":
        try:
            return cls(CLASS_NAMES.index(label))
        except ValueError:
            raise ValueError(
                f"unknown modulation format {label!r}; known: {', '.join(CLASS_NAMES)}"
            ) from None


# ---------------------------------------------------------------------------
# constellations and pulse shaping


def _square_qam(side_levels: np.ndarray) -> np.ndarray:
    grid_i, grid_q = np.meshgrid(side_levels, side_levels)
    points = (grid_i + 1j * grid_q).ravel()
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


_CONSTELLATIONS: dict[ModulationFormat, np.ndarray] = {
    ModulationFormat.BPSK: np.array([-1.0, 1.0], dtype=complex),
    ModulationFormat.QPSK: np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2),
    ModulationFormat.PSK8: np.exp(2j * np.pi * np.arange(8) / 8),
    ModulationFormat.QAM16: _square_qam(np.arange(-3.0, 4.0, 2.0)),
    ModulationFormat.QAM64: _square_qam(np.arange(-7.0, 8.0, 2.0)),
    ModulationFormat.PAM4: np.array([-3.0, -1.0, 1.0, 3.0], dtype=complex) / np.sqrt(5),
}


def constellation(fmt: ModulationFormat) -> np.ndarray:
    """Symbol alphabet of a linear format, scaled to unit mean power."""
    if fmt not in _CONSTELLATIONS:
        raise ValueError(f"{fmt.label} has no symbol constellation")
    return _CONSTELLATIONS[fmt].copy()


def rrc_taps(sps: int = SAMPLES_PER_SYMBOL, span: int = RRC_SPAN,
             beta: float = RRC_ROLLOFF) -> np.ndarray:
    """Root-raised-cosine impulse response, unit energy, span*sps + 1 taps."""
    n = span * sps
    t = np.arange(-n // 2, n // 2 + 1, dtype=np.float64) / sps
    taps = np.empty_like(t)
    # remove both singular points from the vectorized formula
    near_zero = np.isclose(t, 0.0)
    near_break = np.isclose(np.abs(t), 1.0 / (4 * beta))
    safe = ~(near_zero | near_break)
    ts = t[safe]
    taps[safe] = (
        np.sin(np.pi * ts * (1 - beta)) + 4 * beta * ts * np.cos(np.pi * ts * (1 + beta))
    ) / (np.pi * ts * (1 - (4 * beta * ts) ** 2))
    taps[near_zero] = 1.0 - beta + 4 * beta / np.pi
    taps[near_break] = (beta / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
    )
    return taps / np.sqrt(np.sum(taps**2))


def _linear_modulated(fmt: ModulationFormat, length: int,
                      rng: np.random.Generator) -> np.ndarray:
    points = _CONSTELLATIONS[fmt]
    sps = SAMPLES_PER_SYMBOL
    nsym = -(-length // sps) + 2 * RRC_SPAN
    symbols = points[rng.integers(0, len(points), size=nsym)]
    upsampled = np.zeros(nsym * sps, dtype=complex)
    upsampled[::sps] = symbols
    shaped = np.convolve(upsampled, rrc_taps())
    delay = RRC_SPAN * sps // 2
    return shaped[delay:delay + length]


def _gaussian_kernel(bt: float, sps: int) -> np.ndarray:
    # std of the Gaussian pulse in samples, from the 3 dB bandwidth-time product
    sigma = np.sqrt(np.log(2)) / (2 * np.pi * bt) * sps
    half = int(np.ceil(4 * sigma))
    t = np.arange(-half, half + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (t / sigma) ** 2)
    return kernel / kernel.sum()


def _fsk_modulated(fmt: ModulationFormat, length: int,
                   rng: np.random.Generator) -> np.ndarray:
    sps = SAMPLES_PER_SYMBOL
    pad = 4  # symbols dropped from the front to hide the filter start-up
    nsym = -(-length // sps) + 2 * pad
    bits = rng.integers(0, 2, size=nsym) * 2.0 - 1.0
    nrz = np.repeat(bits, sps)
    if fmt is ModulationFormat.GFSK:
        nrz = np.convolve(nrz, _gaussian_kernel(GFSK_BT, sps), mode="same")
    phase = np.pi * FSK_INDEX * np.cumsum(nrz) / sps
    return np.exp(1j * phase)[pad * sps:pad * sps + length]


def _message(length: int, rng: np.random.Generator) -> np.ndarray:
    """Audio-like message: one-pole low-passed white noise at unit RMS."""
    warmup = 256
    white = rng.standard_normal(length + warmup)
    pole = math.exp(-2 * np.pi * 5e3 / FM_SAMPLE_RATE)
    out = np.empty_like(white)
    acc = 0.0
    for i, w in enumerate(white):
        acc = pole * acc + (1 - pole) * w
        out[i] = acc
    out = out[warmup:]
    rms = np.sqrt(np.mean(out**2))
    return out / rms if rms > 0 else out


def _analytic(signal: np.ndarray) -> np.ndarray:
    """Analytic signal via the FFT method (positive frequencies doubled)."""
    n = len(signal)
    spectrum = np.fft.fft(signal)
    gain = np.zeros(n)
    gain[0] = 1.0
    if n % 2 == 0:
        gain[n // 2] = 1.0
        gain[1:n // 2] = 2.0
    else:
        gain[1:(n + 1) // 2] = 2.0
    return np.fft.ifft(spectrum * gain)


def _analog_modulated(fmt: ModulationFormat, length: int,
                      rng: np.random.Generator) -> np.ndarray:
    m = _message(length, rng)
    if fmt is ModulationFormat.WBFM:
        phase = 2 * np.pi * FM_DEVIATION / FM_SAMPLE_RATE * np.cumsum(m)
        return np.exp(1j * phase)
    if fmt is ModulationFormat.AM_DSB:
        return (1.0 + AM_MOD_INDEX * m).astype(complex)
    if fmt is ModulationFormat.AM_SSB:
        return _analytic(m)
    raise ValueError(f"{fmt.label} is not an analog format")


def modulate(fmt: ModulationFormat, length: int, rng: np.random.Generator) -> np.ndarray:
    """Clean unit-power baseband capture of one format, as complex samples."""
    if length < 32:
        raise ValueError(f"capture length must be at least 32 samples, got {length}")
    if fmt in _CONSTELLATIONS:
        x = _linear_modulated(fmt, length, rng)
    elif fmt in (ModulationFormat.CPFSK, ModulationFormat.GFSK):
        x = _fsk_modulated(fmt, length, rng)
    else:
        x = _analog_modulated(fmt, length, rng)
    power = np.mean(np.abs(x) ** 2)
    return x / np.sqrt(power)


# ---------------------------------------------------------------------------
# channel model


@dataclass(frozen=True)
class ChannelParams:
    """Impairments applied to a capture, in application order.

    cfo_norm is the carrier frequency offset in cycles per sample, sro_ppm
    the sample rate offset in parts per million, snr_db the target AWGN
    level (None or +inf means noiseless). A zero/None parameter leaves the
    samples untouched, so all-defaults is an exact identity. rng_seed seeds
    the noise draw when no generator is passed to apply_channel.
    """

    snr_db: float | None = None
    cfo_norm: float = 0.0
    sro_ppm: float = 0.0
    rng_seed: int | None = None

    def __post_init__(self):
        if not abs(self.cfo_norm) <= MAX_CFO:
            raise ValueError(f"cfo_norm {self.cfo_norm} outside [-{MAX_CFO}, {MAX_CFO}]")
        if not abs(self.sro_ppm) <= MAX_SRO_PPM:
            raise ValueError(
                f"sro_ppm {self.sro_ppm} outside [-{MAX_SRO_PPM}, {MAX_SRO_PPM}]"
            )


def apply_channel(iq: np.ndarray, params: ChannelParams,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Rotate, resample and add noise; returns a float32 (2, L) array.

    Stages run as: carrier offset rotation, fractional resampling by linear
    interpolation, then AWGN. Noise power is split evenly between I and Q so
    the complex noise power hits the target: sigma^2 = P / 10^(snr_db/10),
    with P measured on the signal actually entering the noise stage.
    """
    if iq.ndim == 2 and iq.shape[0] == 2:
        x = iq[0].astype(np.float64) + 1j * iq[1].astype(np.float64)
    elif iq.ndim == 1 and np.iscomplexobj(iq):
        x = iq.astype(complex)
    else:
        raise ValueError(f"expected (2, L) reals or complex vector, got {iq.shape}")
    length = len(x)
    touched = False
    if params.cfo_norm != 0.0:
        x = x * np.exp(2j * np.pi * params.cfo_norm * np.arange(length))
        touched = True
    if params.sro_ppm != 0.0:
        grid = np.arange(length, dtype=np.float64)
        pos = grid * (1.0 + params.sro_ppm * 1e-6)
        x = np.interp(pos, grid, x.real) + 1j * np.interp(pos, grid, x.imag)
        touched = True
    if params.snr_db is not None and math.isfinite(params.snr_db):
        if rng is None:
            if params.rng_seed is None:
                raise ValueError("adding noise requires a generator or rng_seed")
            rng = np.random.default_rng(params.rng_seed)
        power = np.mean(np.abs(x) ** 2)
        noise_var = power / (10.0 ** (params.snr_db / 10.0))
        scale = np.sqrt(noise_var / 2.0)
        noise = rng.normal(0.0, scale, size=(2, length))
        x = x + noise[0] + 1j * noise[1]
        touched = True
    if not touched and iq.ndim == 2 and iq.dtype == np.float32:
        return iq.copy()
    return np.stack([x.real, x.imag]).astype(np.float32)


# ---------------------------------------------------------------------------
# dataset container


@dataclass
class Dataset:
    """In-memory dataset: iq is (N, 2, L) float32, labels index class_names."""

    iq: np.ndarray
    labels: np.ndarray
    snrs: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        self.iq = np.ascontiguousarray(self.iq, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.snrs = np.asarray(self.snrs, dtype=np.int64)
        self.class_names = tuple(self.class_names)
        n = len(self.iq)
        if self.iq.ndim != 3 or self.iq.shape[1] != 2:
            raise ValueError(f"iq must be (N, 2, L), got {self.iq.shape}")
        if len(self.labels) != n or len(self.snrs) != n:
            raise ValueError(
                f"length mismatch: {n} captures, {len(self.labels)} labels, "
                f"{len(self.snrs)} snrs"
            )
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DatasetLabelError(
                f"labels must lie in [0, {len(self.class_names)}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return len(self.iq)

    @property
    def length(self) -> int:
        return self.iq.shape[2]

    def counts(self) -> dict[tuple[str, int], int]:
        """Examples per (class name, snr) cell, for split sanity checks."""
        out: dict[tuple[str, int], int] = {}
        for label, snr in zip(self.labels, self.snrs):
            key = (self.class_names[label], int(snr))
            out[key] = out.get(key, 0) + 1
        return out

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.iq[indices], self.labels[indices],
                       self.snrs[indices], self.class_names)


# ---------------------------------------------------------------------------
# generation


def _example_rng(seed: int, fmt: ModulationFormat, snr_db: int, index: int):
    # keying the stream by (seed, format, snr, index) makes every example
    # reproducible independently of generation order or worker count
    return np.random.default_rng([seed, int(fmt), snr_db + 1000, index])


def generate_example(fmt: ModulationFormat, snr_db: int, length: int,
                     seed: int, index: int, impairments: bool = True) -> np.ndarray:
    """One impaired capture as a (2, L) float32 array."""
    rng = _example_rng(seed, fmt, snr_db, index)
    clean = modulate(fmt, length, rng)
    if impairments:
        params = ChannelParams(
            snr_db=float(snr_db),
            cfo_norm=rng.uniform(-MAX_CFO, MAX_CFO),
            sro_ppm=rng.uniform(-MAX_SRO_PPM, MAX_SRO_PPM),
        )
    else:
        params = ChannelParams(snr_db=float(snr_db))
    return apply_channel(clean, params, rng)


def _worker_count() -> int:
    raw = os.environ.get("AMCNET_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def generate_dataset(formats=None, snrs=None, per_cell: int = 100,
                     length: int = 128, seed: int = 0,
                     impairments: bool = True) -> Dataset:
    """Generate per_cell captures for every (format, snr) pair.

    formats defaults to all eleven; snrs defaults to -20..18 dB in 2 dB
    steps. Examples are laid out grouped by format then snr then index, and
    each is seeded independently, so the same arguments always produce the
    same bytes regardless of AMCNET_THREADS.
    """
    if formats is None:
        formats = list(ModulationFormat)
    else:
        formats = [f if isinstance(f, ModulationFormat) else ModulationFormat.from_label(f)
                   for f in formats]
    if not formats:
        raise ValueError("at least one modulation format is required")
    if len(set(formats)) != len(formats):
        raise ValueError("duplicate formats requested")
    if snrs is None:
        snrs = list(range(-20, 20, 2))
    snrs = [int(s) for s in snrs]
    if per_cell <= 0 or length <= 0:
        raise ValueError("per_cell and length must be positive")
    formats = sorted(formats)
    class_names = tuple(f.label for f in formats)
    jobs = [(fmt, snr, idx)
            for fmt in formats for snr in snrs for idx in range(per_cell)]
    iq = np.empty((len(jobs), 2, length), dtype=np.float32)

    def fill(span):
        for j in span:
            fmt, snr, idx = jobs[j]
            iq[j] = generate_example(fmt, snr, length, seed, idx, impairments)

    workers = _worker_count()
    if workers == 1 or len(jobs) < 4 * workers:
        fill(range(len(jobs)))
    else:
        spans = [range(w, len(jobs), workers) for w in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, spans))
    labels = np.repeat(np.arange(len(formats)), len(snrs) * per_cell)
    snr_col = np.tile(np.repeat(snrs, per_cell), len(formats))
    return Dataset(iq, labels, snr_col, class_names)


# ---------------------------------------------------------------------------
# AMCD file format


def write_dataset(dataset: Dataset, path) -> None:
    """Write the AMCD binary form: fixed header, class table, then examples."""
    n, _, length = dataset.iq.shape
    distinct_snrs = len(set(dataset.snrs.tolist()))
    blob = bytearray()
    blob += DATASET_MAGIC
    blob += struct.pack("<IIIII", DATASET_VERSION, n, length,
                        len(dataset.class_names), distinct_snrs)
    for name in dataset.class_names:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
    for i in range(n):
        blob += struct.pack("<Hh", int(dataset.labels[i]), int(dataset.snrs[i]))
        blob += dataset.iq[i, 0].astype("<f4").tobytes()
        blob += dataset.iq[i, 1].astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def read_dataset(path) -> Dataset:
    """Read an AMCD file, validating header, labels and length as it goes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_BYTES:
        raise DatasetTruncatedError(
            f"file is {len(blob)} bytes, shorter than the {HEADER_BYTES}-byte header"
        )
    if blob[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"bad magic {blob[:4]!r}, expected {DATASET_MAGIC!r}")
    version, n, length, class_count, snr_count = struct.unpack_from("<IIIII", blob, 4)
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    offset = HEADER_BYTES
    names = []
    try:
        for _ in range(class_count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            if offset + name_len > len(blob):
                raise struct.error("class name past end of file")
            names.append(blob[offset:offset + name_len].decode("utf-8"))
            offset += name_len
    except struct.error:
        raise DatasetTruncatedError("file ends inside the class table") from None
    record = 4 + 2 * 4 * length
    expected_end = offset + n * record
    if expected_end > len(blob):
        have = (len(blob) - offset) // record
        raise DatasetTruncatedError(
            f"header promises {n} examples but file holds {have}"
        )
    iq = np.empty((n, 2, length), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    snr_col = np.empty(n, dtype=np.int64)
    for i in range(n):
        label, snr = struct.unpack_from("<Hh", blob, offset)
        offset += 4
        if label >= class_count:
            raise DatasetLabelError(
                f"example {i} has label {label}, class table holds {class_count}"
            )
        labels[i] = label
        snr_col[i] = snr
        row = np.frombuffer(blob, dtype="<f4", count=2 * length, offset=offset)
        iq[i] = row.reshape(2, length)
        offset += 8 * length
    if len(set(snr_col.tolist())) != snr_count:
        raise DatasetFormatError(
            f"header claims {snr_count} distinct snr values, "
            f"examples hold {len(set(snr_col.tolist()))}"
        )
    return Dataset(iq, labels, snr_col, tuple(names))


# ---------------------------------------------------------------------------
# splitting


def split_dataset(dataset: Dataset,
                  ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
                  seed: int = 0):
    """Stratified train/val/test split per (class, snr) cell.

    Validation and test sizes are floored, the remainder goes to train. A
    cell with fewer than 5 examples cannot be stratified meaningfully; it
    goes entirely to train with a warning.
    """
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    train_idx, val_idx, test_idx = [], [], []
    cells: dict[tuple[int, int], list[int]] = {}
    for i, (label, snr) in enumerate(zip(dataset.labels, dataset.snrs)):
        cells.setdefault((int(label), int(snr)), []).append(i)
    for (label, snr), members in sorted(cells.items()):
        if len(members) < 5:
            warnings.warn(
                f"cell ({dataset.class_names[label]}, {snr} dB) has only "
                f"{len(members)} examples; assigning all to train",
                stacklevel=2,
            )
            train_idx.extend(members)
            continue
        rng = np.random.default_rng([seed, label, snr + 1000])
        order = np.array(members)[rng.permutation(len(members))]
        n_val = int(len(members) * ratios[1])
        n_test = int(len(members) * ratios[2])
        val_idx.extend(order[:n_val].tolist())
        test_idx.extend(order[n_val:n_val + n_test].tolist())
        train_idx.extend(order[n_val + n_test:].tolist())
    splits = []
    for idx in (train_idx, val_idx, test_idx):
        arr = np.sort(np.array(idx, dtype=np.int64))
        splits.append(dataset.subset(arr))
    return tuple(splits)

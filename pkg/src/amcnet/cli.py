"""Command-line entry point: generate, train, eval, infer.

Run-level choices (paths, seeds, ablation switches) are flags; model and
optimizer hyperparameters come from an optional flat key=value config file
so ablation sweeps stay scriptable. Every command is deterministic given
its seed, and exits 0 only after its artifact files are fully written.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import datagen
from .datagen import (
    CLASS_NAMES,
    Dataset,
    ModulationFormat,
    generate_dataset,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .metrics import (
    build_report,
    write_confusion_csv,
    write_metrics_csv,
    write_per_snr_csv,
)
from .model import AmcNetModel, ModelConfig, load_model, save_model
from .tensor import Tensor
from .training import TrainConfig, evaluate, fit, xavier_init

__all__ = ["RunConfig", "parse_run_config", "serialize_run_config", "main"]


@dataclass
class RunConfig:
    """Flat key=value run configuration; every key has a default.

    Covers the model shape, the optimizer, the channel impairment bounds
    used at generation time, and the artifact paths. Unknown keys are
    rejected on parse.
    """

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
    max_epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    min_delta: float = 1e-6
    seed: int = 0
    channel_snr_db: float | None = None
    channel_cfo_norm: float = datagen.MAX_CFO
    channel_sro_ppm: float = datagen.MAX_SRO_PPM
    data_path: str = ""
    model_path: str = ""
    report_dir: str = ""

    def model_config(self, num_classes: int | None = None,
                     use_acm: bool | None = None, use_msm: bool | None = None,
                     use_ffm: bool | None = None) -> ModelConfig:
        return ModelConfig(
            sequence_length=self.sequence_length,
            num_classes=self.num_classes if num_classes is None else num_classes,
            mlp_hidden=self.mlp_hidden,
            msm_filters_per_kernel=self.msm_filters_per_kernel,
            msm_kernel_lengths=self.msm_kernel_lengths,
            backbone_channels=self.backbone_channels,
            heads=self.heads,
            classifier_hidden=self.classifier_hidden,
            use_acm=self.use_acm if use_acm is None else use_acm,
            use_msm=self.use_msm if use_msm is None else use_msm,
            use_ffm=self.use_ffm if use_ffm is None else use_ffm,
        )

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            patience=self.patience,
            min_delta=self.min_delta,
            seed=self.seed if seed is None else seed,
        )


_TUPLE_KEYS = ("msm_kernel_lengths", "backbone_channels", "classifier_hidden")


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key: str, raw: str, kind):
    if key == "channel_snr_db":
        return None if raw.lower() in ("none", "") else float(raw)
    if key in _TUPLE_KEYS:
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if kind is bool:
        if raw.lower() not in ("true", "false"):
            raise ValueError(f"{key} must be true or false, got {raw!r}")
        return raw.lower() == "true"
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_run_config(text: str) -> RunConfig:
    """Parse key=value lines; blank lines and # comments are skipped."""
    defaults = RunConfig()
    kinds = {f.name: type(getattr(defaults, f.name)) for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in kinds:
            raise ValueError(
                f"line {lineno}: unknown config key {key!r}; "
                f"known keys: {', '.join(sorted(kinds))}"
            )
        values[key] = _parse_value(key, raw.strip(), kinds[key])
    return RunConfig(**values)


def serialize_run_config(config: RunConfig) -> str:
    lines = [f"{f.name}={_format_value(getattr(config, f.name))}"
             for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


def load_run_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_run_config(fh.read())


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(args) -> int:
    if args.formats is None:
        formats = list(ModulationFormat)
    else:
        formats = [ModulationFormat.from_label(name.strip())
                   for name in args.formats.split(",") if name.strip()]
    snrs = list(range(args.snr_min, args.snr_max + 1, args.snr_step))
    dataset = generate_dataset(formats, snrs, per_cell=args.per_class,
                               seed=args.seed)
    write_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} examples "
          f"({len(dataset.class_names)} formats x {len(snrs)} SNRs) to {args.out}")
    return 0


def _history_path(model_path: str) -> str:
    return f"{model_path}.history.csv"


def _cmd_train(args) -> int:
    config = load_run_config(args.config) if args.config else RunConfig()
    dataset = read_dataset(args.data)
    if dataset.length != config.sequence_length:
        raise ValueError(
            f"dataset length {dataset.length} does not match configured "
            f"sequence_length {config.sequence_length}"
        )
    model_config = config.model_config(
        num_classes=len(dataset.class_names),
        use_acm=False if args.no_acm else None,
        use_msm=False if args.no_msm else None,
        use_ffm=False if args.no_ffm else None,
    )
    seed = args.seed if args.seed is not None else config.seed
    train, val, _ = split_dataset(dataset, seed=seed)
    model = xavier_init(AmcNetModel(model_config), seed=seed)
    print(f"model parameters: {model.num_parameters}")
    for group, count in sorted(model.parameter_breakdown().items()):
        print(f"  {group}: {count}")
    result = fit(model, train, val, config.train_config(seed=seed),
                 history_path=_history_path(args.out), log=print)
    save_model(model, args.out)
    val_final = evaluate(model, val)
    print(f"best epoch {result.best_epoch}: "
          f"val_loss {val_final.loss:.4f}  val_acc {val_final.accuracy:.4f}")
    print(f"wrote {args.out} and {_history_path(args.out)}")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model).eval()
    dataset = read_dataset(args.data)
    if len(dataset.class_names) != model.config.num_classes:
        raise ValueError(
            f"dataset has {len(dataset.class_names)} classes, checkpoint "
            f"expects {model.config.num_classes}"
        )
    if dataset.length != model.config.sequence_length:
        raise ValueError(
            f"dataset length {dataset.length} does not match checkpoint "
            f"length {model.config.sequence_length}"
        )
    result = evaluate(model, dataset)
    report = build_report(dataset.labels, result.predictions, dataset.snrs,
                          dataset.class_names)
    os.makedirs(args.report_dir, exist_ok=True)
    write_metrics_csv(report, os.path.join(args.report_dir, "metrics.csv"))
    write_confusion_csv(report, os.path.join(args.report_dir, "confusion.csv"))
    write_per_snr_csv(report, os.path.join(args.report_dir, "per_snr_accuracy.csv"))
    print(f"overall_accuracy {report.overall_accuracy:.4f}  "
          f"macro_f1 {report.macro_f1:.4f}  kappa {report.kappa:.4f}")
    print(f"wrote metrics.csv, confusion.csv, per_snr_accuracy.csv to {args.report_dir}")
    return 0


def _read_infer_input(path, length: int) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == datagen.DATASET_MAGIC:
        dataset = read_dataset(path)
        if len(dataset) != 1:
            raise ValueError(
                f"inference input must hold exactly 1 example, got {len(dataset)}"
            )
        if dataset.length != length:
            raise ValueError(
                f"input length {dataset.length} does not match model length {length}"
            )
        return dataset.iq
    size = os.path.getsize(path)
    expected = 2 * length * 4
    if size != expected:
        raise ValueError(
            f"raw input must be exactly {expected} bytes "
            f"(2 x {length} float32), got {size}"
        )
    raw = np.fromfile(path, dtype="<f4")
    return raw.reshape(1, 2, length)


def _cmd_infer(args) -> int:
    model = load_model(args.model).eval()
    length = model.config.sequence_length
    iq = _read_infer_input(args.input, length)
    num_classes = model.config.num_classes
    with open(args.input, "rb") as fh:
        names: tuple[str, ...] = ()
        if fh.read(4) == datagen.DATASET_MAGIC:
            names = read_dataset(args.input).class_names
    if len(names) != num_classes:
        names = CLASS_NAMES if num_classes == len(CLASS_NAMES) else tuple(
            f"class{i}" for i in range(num_classes)
        )
    probs = model.predict_proba(Tensor(iq))[0]
    winner = int(np.argmax(probs))
    print(f"predicted: {names[winner]}")
    for name, p in zip(names, probs):
        print(f"  {name}: {p:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amcnet",
        description="Generate modulation datasets, train and evaluate the classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic AMCD dataset")
    gen.add_argument("--out", required=True, help="output AMCD path")
    gen.add_argument("--formats", default=None,
                     help=f"comma list from: {', '.join(CLASS_NAMES)} (default all)")
    gen.add_argument("--snr-min", type=int, default=-20)
    gen.add_argument("--snr-max", type=int, default=18)
    gen.add_argument("--snr-step", type=int, default=2)
    gen.add_argument("--per-class", type=int, default=1000,
                     help="examples per (format, SNR) pair")
    gen.add_argument("--seed", type=int, default=0)

    train = sub.add_parser("train", help="train on an AMCD dataset")
    train.add_argument("--data", required=True, help="AMCD dataset path")
    train.add_argument("--config", default=None, help="key=value run config file")
    train.add_argument("--out", required=True, help="output AMCM checkpoint path")
    train.add_argument("--no-acm", action="store_true",
                       help="drop the spectrum correction module")
    train.add_argument("--no-msm", action="store_true",
                       help="replace multi-scale convolutions with a channel lift")
    train.add_argument("--no-ffm", action="store_true",
                       help="drop the attention fusion module")
    train.add_argument("--seed", type=int, default=None,
                       help="overrides the config file seed")

    ev = sub.add_parser("eval", help="evaluate a checkpoint, write report CSVs")
    ev.add_argument("--model", required=True, help="AMCM checkpoint path")
    ev.add_argument("--data", required=True, help="AMCD dataset path")
    ev.add_argument("--report-dir", required=True)

    inf = sub.add_parser("infer", help="classify one capture")
    inf.add_argument("--model", required=True, help="AMCM checkpoint path")
    inf.add_argument("--input", required=True,
                     help="single-example AMCD file or raw 2xL float32 blob")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate":
        if args.snr_step <= 0:
            parser.error(f"--snr-step must be positive, got {args.snr_step}")
        if args.snr_min > args.snr_max:
            parser.error(f"--snr-min {args.snr_min} exceeds --snr-max {args.snr_max}")
        if args.per_class <= 0:
            parser.error(f"--per-class must be positive, got {args.per_class}")
    handlers = {
        "generate": _cmd_generate,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "infer": _cmd_infer,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # surface one clean line, fail nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 2 malformed input files, 3 invalid parameters or
configuration, 4 numerical failure.

Configuration files are INI documents with the sections ``data``,
``privacy``, ``source``, ``target``, ``transfer`` and ``run``::

    [data]
    source = mnist/train-images-idx3-ubyte
    source_labels = mnist/train-labels-idx1-ubyte
    target = target.csv
    labelled_per_class = 10
    source_per_class = 500

    [privacy]
    epsilon = 0.1
    delta = 1e-5
    d = 1

    [source]
    n = 20
    r_max = 0.5
    L = 5

    [target]
    n_schedule = 5, 10, 15, 20
    it_max = 4
    r_max = 0.5
    L = 1

    [transfer]
    n_st = 10

    [run]
    seed = 0
    output_dir = out
"""

import argparse
import configparser
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import benchmarks, data_io
from .classifier import ClassifierModel, classify_batch, fit_classifier
from .exceptions import FormatError, InvalidArgumentError, NumericalFailureError
from .numkit import principal_directions
from .privacy import DpParams, perturb, perturb_groups
from .transfer import TransferConfig, TransferModel, fit_transfer, multitask_predict_batch

EXIT_FORMAT = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4

SECTIONS = ("data", "privacy", "source", "target", "transfer", "run")

log = logging.getLogger("dptransfer")


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=dict)
    dp: DpParams = field(default_factory=DpParams)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    seed: int = 0
    output_dir: str = "."


def _number(section, key, kind, default):
    if key not in section:
        return default
    raw = section[key]
    try:
        return kind(raw)
    except ValueError:
        raise InvalidArgumentError(f"[{section.name}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def load_config(path):
    """Parse and validate an experiment configuration file."""
    if not os.path.exists(path):
        raise InvalidArgumentError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise InvalidArgumentError(f"{path}: unknown sections {sorted(unknown)}")
    sec = {name: parser[name] if parser.has_section(name) else parser[parser.default_section] for name in SECTIONS}
    base = os.path.dirname(os.path.abspath(path))

    data = {}
    for key, value in sec["data"].items():
        if key in ("source", "source_labels", "target", "target_labels", "test", "test_labels", "mnist_dir",
                   "usps", "usps_labels"):
            resolved = value if os.path.isabs(value) else os.path.join(base, value)
            if not os.path.exists(resolved):
                raise InvalidArgumentError(f"[data] {key}: {resolved} does not exist")
            data[key] = resolved
        else:
            data[key] = value

    dp = DpParams(
        epsilon=_number(sec["privacy"], "epsilon", float, 0.1),
        delta=_number(sec["privacy"], "delta", float, 1e-5),
        d=_number(sec["privacy"], "d", float, 1.0),
    )
    schedule = sec["target"].get("n_schedule", "5, 10, 15, 20")
    try:
        n_schedule = tuple(int(v) for v in schedule.replace(",", " ").split())
    except ValueError:
        raise InvalidArgumentError(f"[target] n_schedule = {schedule!r} is not a list of integers") from None
    cfg = TransferConfig(
        dp=dp,
        source_n=_number(sec["source"], "n", int, None),
        source_r_max=_number(sec["source"], "r_max", float, 0.5),
        source_L=_number(sec["source"], "l", int, 5),
        n_st=_number(sec["transfer"], "n_st", int, None),
        it_max=_number(sec["target"], "it_max", int, 4),
        n_schedule=n_schedule,
        r_max=_number(sec["target"], "r_max", float, 0.5),
        L=_number(sec["target"], "l", int, 1),
    )
    if cfg.source_n is not None and cfg.source_n < 1:
        raise InvalidArgumentError("[source] n must be positive")
    output_dir = sec["run"].get("output_dir", ".")
    if not os.path.isabs(output_dir):
        output_dir = os.path.join(base, output_dir)
    return ExperimentConfig(data, dp, cfg, _number(sec["run"], "seed", int, 0), output_dir)


def _load(data, key):
    if key not in data:
        raise InvalidArgumentError(f"[data] {key} is required")
    return data_io.load_dataset(data[key], data.get(f"{key}_labels"))


def _write_atomic(path, payload, mode="wb"):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, mode) as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _dp_extras(dp, seed):
    return {"epsilon": np.array(dp.epsilon), "delta": np.array(dp.delta), "d": np.array(dp.d),
            "seed": np.array(seed, dtype=np.int64)}


def _per_class_count(data, key, default):
    value = data.get(key)
    if value is None:
        return default
    try:
        count = int(value)
    except ValueError:
        raise InvalidArgumentError(f"[data] {key} = {value!r} is not an integer") from None
    if count < 1:
        raise InvalidArgumentError(f"[data] {key} must be positive")
    return count


def _source_groups(cfg):
    source = _load(cfg.data, "source")
    per_class = cfg.data.get("source_per_class")
    if per_class is not None:
        source, _ = data_io.split(source, _per_class_count(cfg.data, "source_per_class", 0), cfg.seed)
    return source


def cmd_perturb(args):
    dp = DpParams(epsilon=args.epsilon, delta=args.delta, d=args.d)
    ds = data_io.load_dataset(args.input, args.labels)
    noisy = perturb(ds.features, dp, args.seed)
    noise = noisy - ds.features
    out = data_io.LabelledDataset(noisy, ds.labels, ds.original_labels, ds.source_format, ds.image_shape)
    if ds.source_format == "idx":
        if not args.output_labels:
            raise InvalidArgumentError("--output-labels is required for IDX input")
        data_io.save_idx(out, args.output, args.output_labels)
    else:
        data_io.save_delimited(out, args.output)
    print(f"mean_abs_noise={np.mean(np.abs(noise)):.6g}")
    print(f"zero_fraction={np.mean(noise == 0):.6g}")
    print(f"expected_mean_abs_noise={dp.expected_magnitude:.6g}")
    return 0


def cmd_train_source(args):
    cfg = load_config(args.config)
    source = _source_groups(cfg)
    tc = cfg.transfer
    p_sr = source.p
    noisy = perturb_groups(source.groups(), cfg.dp, cfg.seed)
    clf = fit_classifier(noisy, tc.resolved_source_n(p_sr), tc.source_r_max, tc.source_L, cfg.seed,
                         labels=source.original_labels.tolist())
    p_tg = _load(cfg.data, "target").p if "target" in cfg.data else p_sr
    V_sr = principal_directions(np.hstack(noisy), tc.resolved_n_st(p_sr, p_tg))
    path = args.output or os.path.join(cfg.output_dir, "source.dpmm")
    data_io.save_model(clf, path, extras={"V_sr": V_sr, **_dp_extras(cfg.dp, cfg.seed)})
    print(f"wrote {path}")
    return 0


def cmd_transfer(args):
    cfg = load_config(args.config)
    source = _source_groups(cfg)
    target = _load(cfg.data, "target")
    labelled_per_class = _per_class_count(cfg.data, "labelled_per_class", 10)
    labelled, unlabelled = data_io.split(target, labelled_per_class, cfg.seed + 1)
    if source.class_count != target.class_count:
        raise InvalidArgumentError(
            f"source has {source.class_count} classes but target has {target.class_count}"
        )
    model = fit_transfer(source.groups(), labelled.groups(), unlabelled.features, cfg.transfer, cfg.seed)
    model.target_classifier.labels = target.original_labels.tolist()
    model.source_classifier.labels = source.original_labels.tolist()
    path = args.output or os.path.join(cfg.output_dir, "transfer.dpmm")
    data_io.save_model(model, path, extras=_dp_extras(cfg.dp, cfg.seed))
    print(f"wrote {path}")
    return 0


def format_metrics(pred, truth, C, extras):
    """Flat ``key=value`` lines: scalar metrics, per-class accuracy, confusion counts."""
    conf = benchmarks.confusion(pred, truth, C)
    lines = [f"accuracy={benchmarks.accuracy(pred, truth):.10g}", f"n_test={len(truth)}"]
    lines += [f"{k}={v}" for k, v in extras.items()]
    totals = conf.sum(axis=1)
    for c in range(C):
        acc = conf[c, c] / totals[c] if totals[c] else float("nan")
        lines.append(f"class_accuracy.{c}={acc:.10g}")
    for i in range(C):
        for j in range(C):
            lines.append(f"confusion.{i}.{j}={conf[i, j]}")
    return "\n".join(lines) + "\n"


def _label_index(model_labels, original):
    lookup = {int(v): k for k, v in enumerate(model_labels)}
    try:
        return np.array([lookup[int(v)] for v in original])
    except KeyError as exc:
        raise InvalidArgumentError(f"test label {exc.args[0]} is unknown to the model") from None


def cmd_evaluate(args):
    model, extras = data_io.load_model(args.model, with_extras=True)
    test = data_io.load_dataset(args.test, args.test_labels)
    if isinstance(model, TransferModel):
        idx, _ = multitask_predict_batch(model, test.features)
        labels = model.target_classifier.labels
    elif isinstance(model, ClassifierModel):
        idx, _ = classify_batch(model, test.features)
        labels = model.labels
    else:
        raise InvalidArgumentError(f"cannot evaluate a {type(model).__name__}")
    truth = _label_index(labels, test.original_labels[test.labels])
    seed = int(extras["seed"]) if "seed" in extras else 0
    meta = {
        "epsilon": repr(float(extras["epsilon"])) if "epsilon" in extras else "nan",
        "delta": repr(float(extras["delta"])) if "delta" in extras else "nan",
        "seed": seed,
    }
    if args.config:
        cfg = load_config(args.config)
        meta.update(epsilon=repr(cfg.dp.epsilon), delta=repr(cfg.dp.delta), seed=cfg.seed)
    text = format_metrics(idx, truth, len(labels), meta)
    acc = benchmarks.accuracy(idx, truth)
    print(f"accuracy: {acc:.4f} ({int(np.sum(idx == truth))}/{len(truth)})")
    conf = benchmarks.confusion(idx, truth, len(labels))
    for c, name in enumerate(labels):
        total = conf[c].sum()
        if total:
            print(f"  class {name}: {conf[c, c] / total:.4f} ({conf[c, c]}/{total})")
    print("confusion (rows true, columns predicted):")
    for row in conf:
        print("  " + " ".join(f"{v:5d}" for v in row))
    if args.metrics:
        _write_atomic(args.metrics, text, "w")
        print(f"wrote {args.metrics}")
    return 0


def _bench_rows(suite, cfg, args):
    if suite == "synthetic":
        seeds = range(cfg.seed, cfg.seed + args.repeats)
        for eps in (cfg.dp.epsilon, math.inf):
            acc, runs = benchmarks.synthetic_suite(eps, seeds=tuple(seeds), cfg=cfg.transfer)
            spread = float(np.std([r.accuracy for r in runs]))
            yield eps, acc, spread, len(runs)
        return
    if suite == "mnist-self":
        directory = cfg.data.get("mnist_dir", args.data_dir)
        if directory is None:
            raise InvalidArgumentError("mnist-self needs [data] mnist_dir or --data-dir")
        source, target = benchmarks.load_mnist(directory)
    else:
        directory = cfg.data.get("mnist_dir", args.data_dir)
        if directory is None or "usps" not in cfg.data:
            raise InvalidArgumentError("mnist2usps needs [data] mnist_dir and usps (plus usps_labels for IDX)")
        source, _ = benchmarks.load_mnist(directory)
        target = data_io.load_dataset(cfg.data["usps"], cfg.data.get("usps_labels"))
    source_per_class = _per_class_count(cfg.data, "source_per_class", 500)
    labelled_per_class = _per_class_count(cfg.data, "labelled_per_class", 10)
    held_out = _per_class_count(cfg.data, "held_out", 1000)
    for eps in (cfg.dp.epsilon, math.inf):
        accs = []
        for r in range(args.repeats):
            run = benchmarks.domain_transfer(source, target, cfg.seed + r, eps, source_per_class,
                                             labelled_per_class, held_out, cfg.transfer)
            accs.append(run.accuracy)
        yield eps, float(np.mean(accs)), float(np.std(accs)), len(accs)


def cmd_benchmark(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.repeats < 1:
        raise InvalidArgumentError("--repeats must be positive")
    lines = [f"suite={args.suite}", f"seed={cfg.seed}", f"delta={cfg.dp.delta!r}", f"d={cfg.dp.d!r}"]
    rows = []
    start = time.perf_counter()
    for eps, acc, spread, count in _bench_rows(args.suite, cfg, args):
        tag = "inf" if math.isinf(eps) else repr(eps)
        rows.append((tag, acc))
        lines += [f"accuracy.epsilon_{tag}={acc:.10g}", f"std.epsilon_{tag}={spread:.10g}", f"runs.epsilon_{tag}={count}"]
        print(f"epsilon={tag:>6}  accuracy={100 * acc:6.2f}%  std={100 * spread:5.2f}  runs={count}", flush=True)
    gap = rows[1][1] - rows[0][1]
    lines.append(f"gap_nonprivate_minus_private={gap:.10g}")
    print(f"private/non-private gap: {100 * gap:.2f} points ({time.perf_counter() - start:.1f}s)")
    report = "\n".join(lines) + "\n"
    if args.report:
        _write_atomic(args.report, report, "w")
        print(f"wrote {args.report}")
    return 0


class _Parser(argparse.ArgumentParser):
    """Reports usage errors with the invalid-parameter exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="dptransfer", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("perturb", help="add differentially private noise to a dataset")
    p.add_argument("--input", required=True, help="delimited table or IDX images")
    p.add_argument("--labels", help="IDX labels belonging to --input")
    p.add_argument("--output", required=True)
    p.add_argument("--output-labels", help="IDX labels output (IDX input only)")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("train-source", help="train the private source classifier")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("transfer", help="run the full private transfer pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("evaluate", help="score a classifier or transfer model on labelled data")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--test-labels")
    p.add_argument("--config")
    p.add_argument("--metrics", help="write flat key=value metrics here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="desk-scale private vs non-private comparison")
    p.add_argument("--suite", required=True, choices=("mnist-self", "mnist2usps", "synthetic"))
    p.add_argument("--config")
    p.add_argument("--data-dir", help="directory holding the MNIST IDX files")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--report", help="write flat key=value report here")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "repeats", 0) is None:
        args.repeats = len(benchmarks.SYNTHETIC_SEEDS) if args.suite == "synthetic" else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except InvalidArgumentError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_INVALID

"""Command-line entry point: ``tensor-reid <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import ArgumentError, DataError, NumericError
from .formats import (
    atomic_write,
    read_features,
    read_labels,
    read_model,
    write_features,
    write_labels,
    write_model,
)
from .harness import (
    ExperimentConfig,
    SyntheticSpec,
    dim_label,
    format_aggregate_csv,
    format_markdown,
    format_plot_data,
    format_table_csv,
    format_trial_csv,
    generate_synthetic,
    run_experiment,
    summary,
)
from .hdff import NORMALIZE_CHOICES, FeatureBlock, FusionConfig, hdff_pipeline
from .matching import DEFAULT_RANKS, cmc, rank_k, score_and_rank
from .tensor_core import read_tsr3, tsr3_bytes
from .txqda import AUTO, CrossViewSet, TxqdaConfig, fit, transform

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("tensor_reid")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(argparse.ArgumentTypeError):
    """Bad flag or config value; argparse reports it when raised by a ``type=``."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers ---------------------------------------------------------------


def _existing(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {path}")
    return p


def _out_path(path):
    p = Path(path)
    if not p.parent.is_dir():
        raise UsageError(f"output directory does not exist: {p.parent}")
    return p


def _write_bytes(path, data):
    with atomic_write(path, "wb") as fh:
        fh.write(data)


def _write_text(path, text):
    with atomic_write(path) as fh:
        fh.write(text)


def _parse_dims(text):
    """``auto``, ``s`` or ``s x n`` (e.g. ``8x4``) as a TxqdaConfig target."""
    text = text.strip().lower()
    if text == AUTO:
        return AUTO
    parts = text.split("x")
    try:
        values = [AUTO if p == AUTO else int(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad --dims value {text!r}") from None
    if len(values) == 1:
        return (values[0], AUTO)
    if len(values) != 2:
        raise UsageError(f"bad --dims value {text!r}")
    return tuple(values)


def _load_toml(path):
    try:
        with open(_existing(path), "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: invalid TOML ({exc})") from None


def _apply_override(cfg, assignment):
    if "=" not in assignment:
        raise UsageError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    node = cfg
    *parents, leaf = key.strip().split(".")
    for part in parents:
        node = node.setdefault(part, {})
    node[leaf] = value


def _txqda_config(table):
    known = {"target_dims", "lam", "max_iters", "tol", "eig_method", "monotone"}
    unknown = set(table) - known
    if unknown:
        raise UsageError(f"unknown txqda settings: {sorted(unknown)}")
    table = dict(table)
    if isinstance(table.get("target_dims"), str):
        table["target_dims"] = _parse_dims(table["target_dims"])
    try:
        return TxqdaConfig(**table)
    except ArgumentError as exc:
        raise UsageError(f"txqda settings: {exc}") from None


def _experiment_config(table, threads):
    known = {
        "trials", "train_fraction", "train_count", "seed", "dims", "ranks",
        "baseline", "gallery_camera", "fusion", "txqda", "configurations",
    }
    unknown = set(table) - known
    if unknown:
        raise UsageError(f"unknown experiment settings: {sorted(unknown)}")
    table = dict(table)
    fusion = table.pop("fusion", {})
    unknown = set(fusion) - {"n_parts", "normalize"}
    if unknown:
        raise UsageError(f"unknown fusion settings: {sorted(unknown)}")
    txqda = table.pop("txqda", {})
    txqda = _txqda_config(txqda)
    try:
        return ExperimentConfig(
            fusion=FusionConfig(**fusion), txqda=txqda, threads=threads, **table
        )
    except ArgumentError as exc:
        raise UsageError(f"experiment settings: {exc}") from None


def _blocks_from_files(paths):
    return [FeatureBlock(read_features(p), Path(p).stem) for p in paths]


# -- commands --------------------------------------------------------------


def cmd_fuse(args):
    feature_paths = [_existing(p) for p in args.features]
    label_path = _existing(args.labels)
    out = _out_path(args.out)
    cfg = FusionConfig(n_parts=args.n_parts, normalize=args.normalize)
    blocks = _blocks_from_files(feature_paths)
    labels = read_labels(label_path)
    for b in blocks:
        if b.m != len(labels):
            raise DataError(f"block {b.source_tag!r} has {b.m} vectors but {len(labels)} labels")
    tensor = hdff_pipeline(blocks, cfg)
    sidecar = {
        "n_parts": cfg.n_parts,
        "normalize": cfg.normalize,
        "blocks": [{"source": str(p), "tag": b.source_tag, "d": b.d}
                   for p, b in zip(feature_paths, blocks)],
        "dims": list(tensor.shape),
        "labels": str(label_path),
    }
    _write_bytes(out, tsr3_bytes(tensor))
    _write_text(Path(f"{out}.json"), json.dumps(sidecar, indent=2) + "\n")
    log.info("fused tensor %s -> %s", tensor.shape, out)
    return 0


def cmd_train(args):
    tensor_path = _existing(args.tensor)
    label_path = _existing(args.labels)
    out = _out_path(args.out)
    table = _load_toml(args.config).get("txqda", {}) if args.config else {}
    if args.dims is not None:
        table["target_dims"] = args.dims
    for key in ("lam", "max_iters", "tol"):
        if getattr(args, key) is not None:
            table[key] = getattr(args, key)
    cfg = _txqda_config(table)
    tensor = read_tsr3(tensor_path)
    labels = read_labels(label_path)
    if len(labels) != tensor.shape[2]:
        raise DataError(f"{len(labels)} labels for {tensor.shape[2]} samples")
    mask = np.ones(len(labels), dtype=bool)
    if args.train_persons:
        wanted = [ln.strip() for ln in open(_existing(args.train_persons)) if ln.strip()]
        mask = np.isin(labels.person_ids, wanted)
    data = CrossViewSet(
        tensor[:, :, mask], labels.person_ids[mask], labels.camera_ids[mask], args.gallery_camera
    )
    model = fit(data, cfg)
    if not model.converged:
        log.warning("TXQDA stopped at max_iters=%d before reaching tol", cfg.max_iters)
    write_model(out, model, cfg.to_dict())
    log.info("model %s -> %s written to %s", model.input_dims, model.output_dims, out)
    return 0


def cmd_transform(args):
    model_path = _existing(args.model)
    tensor_path = _existing(args.tensor)
    out = _out_path(args.out)
    if args.select_camera is not None and not (args.labels and args.labels_out):
        raise UsageError("--select-camera needs --labels and --labels-out")
    model, _ = read_model(model_path)
    tensor = read_tsr3(tensor_path)
    labels = None
    if args.labels:
        labels = read_labels(_existing(args.labels))
        if len(labels) != tensor.shape[2]:
            raise DataError(f"{len(labels)} labels for {tensor.shape[2]} samples")
    if args.select_camera is not None:
        mask = labels.camera_ids == args.select_camera
        if not mask.any():
            raise DataError(f"no samples from camera {args.select_camera!r}")
        tensor = tensor[:, :, mask]
        labels = labels.subset(mask)
    projected = transform(model, tensor)
    _write_bytes(out, tsr3_bytes(projected))
    if args.labels_out:
        write_labels(_out_path(args.labels_out), labels)
    return 0


def cmd_rank(args):
    g_path, gl_path = _existing(args.gallery), _existing(args.gallery_labels)
    p_path, pl_path = _existing(args.probe), _existing(args.probe_labels)
    ranking_out = _out_path(args.ranking_out)
    cmc_out = _out_path(args.cmc_out)
    gallery, g_labels = read_tsr3(g_path), read_labels(gl_path)
    probes, p_labels = read_tsr3(p_path), read_labels(pl_path)
    if len(g_labels) != gallery.shape[2] or len(p_labels) != probes.shape[2]:
        raise DataError("label files do not match tensor sample counts")
    ranking = score_and_rank(gallery, g_labels.person_ids, probes, p_labels.person_ids)
    curve = cmc(ranking, args.k_max)

    lines = ["probe_id,rank,gallery_id,score"]
    for p in range(ranking.n_probes):
        pid = p_labels.sample_ids[p]
        for r, (g, score) in enumerate(zip(ranking.order[p], ranking.scores[p]), start=1):
            lines.append(f"{pid},{r},{g_labels.sample_ids[g]},{float(score)!r}")
    _write_text(ranking_out, "\n".join(lines) + "\n")
    curve_csv = "rank,probability\n" + "".join(
        f"{r},{float(v)!r}\n" for r, v in enumerate(curve.values, start=1)
    )
    _write_text(cmc_out, curve_csv)
    if args.emit_plot_data:
        _write_text(_out_path(args.emit_plot_data), "rank,probability\n" + "".join(
            f"{r},{float(v)!r}\n" for r, v in enumerate(curve.values[:20], start=1)
        ))
    ks = [k for k in DEFAULT_RANKS if k <= len(curve)]
    print(" ".join(f"Rank-{k}={v}" for k, v in zip(ks, rank_k(curve, ks))))
    return 0


def cmd_evaluate(args):
    feature_paths = [_existing(p) for p in args.features]
    label_path = _existing(args.labels)
    out_dir = Path(args.out_dir)
    table = _load_toml(args.config) if args.config else {}
    if args.trials is not None:
        table["trials"] = args.trials
    if args.seed is not None:
        table["seed"] = args.seed
    if args.dims is not None:
        table["dims"] = args.dims
    for assignment in args.set or []:
        _apply_override(table, assignment)
    cfg = _experiment_config(table, args.threads)
    blocks = _blocks_from_files(feature_paths)
    labels = read_labels(label_path)

    result = run_experiment(blocks, labels, cfg)

    files = {
        "cmc_aggregate.csv": format_aggregate_csv(result),
        "table.md": format_markdown(result),
        "table.csv": format_table_csv(result),
        "summary.json": json.dumps(summary(result, args.record_timings), indent=2, sort_keys=True)
        + "\n",
    }
    for trial in result.trials:
        files[f"trials/trial_{trial.index:03d}.csv"] = format_trial_csv(trial, result.rows)
    if args.emit_plot_data:
        for key in result.rows:
            files[f"plot/{key[0]}_{key[1]}.csv"] = format_plot_data(result, key)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rel, text in files.items():
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_text(path, text)
    print(files["table.md"])
    return 0


def cmd_synth(args):
    out_dir = Path(args.out_dir)
    spec = SyntheticSpec(
        n_identities=args.identities,
        samples_per_view=args.samples_per_view,
        dims=tuple(args.dims),
        signal=args.signal,
        view_offset=args.view_offset,
        noise=args.noise,
        seed=args.seed,
        n_parts=args.n_parts,
        signal_rank=args.signal_rank,
    )
    blocks, labels = generate_synthetic(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    for block in blocks:
        write_features(out_dir / f"{block.source_tag}.feat", block.vectors)
    write_labels(out_dir / "labels.csv", labels)
    meta = dict(vars(spec))
    meta["dims"] = list(spec.dims)
    _write_text(out_dir / "synth.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d blocks and %d labels to %s", len(blocks), len(labels), out_dir)
    return 0


# -- parser ----------------------------------------------------------------


def _version_text():
    return (
        f"tensor-reid {__version__} (python {platform.python_version()}, "
        f"numpy {np.__version__}, scipy {scipy.__version__})"
    )


def build_parser():
    def common(p, defaults):
        p.add_argument("-v", "--verbose", action="count",
                       default=0 if defaults else argparse.SUPPRESS,
                       help="more logging on stderr (repeatable)")
        p.add_argument("-q", "--quiet", action="store_true",
                       default=False if defaults else argparse.SUPPRESS, help="only log errors")
        p.add_argument("--threads", type=int,
                       default=(os.cpu_count() or 1) if defaults else argparse.SUPPRESS,
                       help="worker threads for independent trials (default: all cores)")

    parser = _Parser(prog="tensor-reid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=_version_text())
    common(parser, True)
    shared = _Parser(add_help=False)
    common(shared, False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fuse", parents=[shared], help="fuse feature files into a third-order tensor")
    p.add_argument("--features", nargs="+", required=True, help="feature files, fused in order")
    p.add_argument("--labels", required=True, help="label file (sample_id,person_id,camera_id)")
    p.add_argument("--n-parts", type=int, default=4, help="parts per vector (default 4)")
    p.add_argument("--normalize", choices=NORMALIZE_CHOICES, default="l2_per_vector",
                   help="per-vector normalization before splitting")
    p.add_argument("--out", required=True, help="output TSR3 file; a .json sidecar is added")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train", parents=[shared], help="fit TXQDA projections on a fused tensor")
    p.add_argument("--tensor", required=True, help="TSR3 tensor")
    p.add_argument("--labels", required=True, help="label file")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--config", help="TOML file; its [txqda] table is used")
    p.add_argument("--dims", type=_parse_dims, help="target dims: auto, s, or sxn")
    p.add_argument("--lam", type=float, help="regularizer added to V_I (default: scale-aware)")
    p.add_argument("--max-iters", type=int, help="alternating sweeps (default 5)")
    p.add_argument("--tol", type=float, help="projector-change tolerance (default 1e-6)")
    p.add_argument("--gallery-camera", help="camera label of the gallery view")
    p.add_argument("--train-persons", help="file with one training person id per line")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transform", parents=[shared], help="project a tensor with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--tensor", required=True)
    p.add_argument("--out", required=True, help="output TSR3 file")
    p.add_argument("--labels", help="label file of --tensor")
    p.add_argument("--select-camera", help="keep only samples from this camera")
    p.add_argument("--labels-out", help="label file for the written samples")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("rank", parents=[shared], help="rank probes against a gallery and compute the CMC")
    p.add_argument("--gallery", required=True)
    p.add_argument("--gallery-labels", required=True)
    p.add_argument("--probe", required=True)
    p.add_argument("--probe-labels", required=True)
    p.add_argument("--ranking-out", required=True, help="CSV: probe_id,rank,gallery_id,score")
    p.add_argument("--cmc-out", required=True, help="CSV: rank,probability")
    p.add_argument("--k-max", type=int, help="CMC length (default: gallery size)")
    p.add_argument("--emit-plot-data", metavar="PATH", help="write ranks 1-20 for plotting")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("evaluate", parents=[shared], help="run the repeated random-split protocol")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config", help="TOML experiment config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dims", nargs="+", help="sweep entries: auto, s, or sxn")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value, e.g. txqda.max_iters=3")
    p.add_argument("--emit-plot-data", action="store_true",
                   help="write plot/<config>_<dim>.csv with ranks 1-20")
    p.add_argument("--record-timings", action="store_true",
                   help="add wall-clock timings to summary.json (breaks bitwise reproducibility)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", parents=[shared], help="write a synthetic two-camera dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--identities", type=int, default=SyntheticSpec.n_identities)
    p.add_argument("--samples-per-view", type=int, default=SyntheticSpec.samples_per_view)
    p.add_argument("--dims", type=int, nargs="+", default=list(SyntheticSpec.dims),
                   help="feature length of each block")
    p.add_argument("--signal", type=float, default=SyntheticSpec.signal)
    p.add_argument("--view-offset", type=float, default=SyntheticSpec.view_offset)
    p.add_argument("--noise", type=float, default=SyntheticSpec.noise)
    p.add_argument("--seed", type=int, default=SyntheticSpec.seed)
    p.add_argument("--n-parts", type=int, default=SyntheticSpec.n_parts)
    p.add_argument("--signal-rank", type=int, default=SyntheticSpec.signal_rank)
    p.set_defaults(func=cmd_synth)
    return parser


def _configure_logging(level):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    for old in [h for h in log.handlers if getattr(h, "_tensor_reid", False)]:
        log.removeHandler(old)
    handler._tensor_reid = True
    log.addHandler(handler)
    log.setLevel(level)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[
        min(args.verbose, 2)
    ]
    _configure_logging(level)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tensor-reid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ArgumentError) as exc:
        print(f"tensor-reid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"tensor-reid: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

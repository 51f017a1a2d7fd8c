"""Evaluation protocol: repeated identity-level random splits, TXQDA training
on the training identities, cosine ranking of camera-two probes against a
camera-one gallery, and CMC aggregation over trials and a dimension sweep.

Also provides a synthetic data generator whose class structure is known, so
learning and fusion claims can be checked without the original datasets.
"""

import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DataError, TensorReidError
from .formats import Labels
from .hdff import FeatureBlock, FusionConfig, hdff_pipeline
from .matching import DEFAULT_RANKS, cmc, rank_k, score_and_rank
from .rng import SplitMix64
from .txqda import AUTO, CrossViewSet, TxqdaConfig, fit, transform

log = logging.getLogger(__name__)

RAW = "raw"


# -- synthetic data --------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic two-camera feature generator.

    Each block's per-sample matrix (``d/n_parts`` x ``n_parts``) is
    ``signal * P1 Z P2^T / rank + view_offset * O_view + noise * E`` where
    ``P1``, ``P2`` are fixed random bases of width ``signal_rank``, ``Z`` is
    drawn once per identity and block, ``O_view`` once per camera and block,
    and ``E`` per sample. Blocks carry independent identity codes, so each
    holds part of the identity information.
    """

    n_identities: int = 20
    samples_per_view: int = 2
    dims: tuple = (64, 32)
    signal: float = 1.0
    view_offset: float = 3.0
    noise: float = 0.4
    seed: int = 0
    n_parts: int = 4
    signal_rank: int = 2

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        for name in ("n_identities", "samples_per_view", "n_parts", "signal_rank"):
            if int(getattr(self, name)) < 1:
                raise ArgumentError(f"{name} must be positive")
        if self.n_identities < 2:
            raise ArgumentError("need at least two identities")
        for name in ("signal", "view_offset", "noise"):
            if not getattr(self, name) >= 0:
                raise ArgumentError(f"{name} must be nonnegative")
        if not self.dims or any(d < 1 or d % self.n_parts for d in self.dims):
            raise ArgumentError(f"n_parts={self.n_parts} must divide every block length {self.dims}")


def generate_synthetic(spec=None):
    """Return ``(blocks, labels)`` for a :class:`SyntheticSpec`.

    Samples are ordered identity-major, then camera, then repeat. Cameras
    are labelled ``"1"`` (gallery) and ``"2"`` (probe).
    """
    spec = spec or SyntheticSpec()
    rng = SplitMix64(spec.seed)
    n = spec.n_parts
    r = spec.signal_rank
    ids, cams = spec.n_identities, 2
    per_view = spec.samples_per_view

    blocks = []
    for b, d in enumerate(spec.dims):
        stream = rng.spawn(b)
        rows = d // n
        p1 = stream.normal((rows, r))
        p2 = stream.normal((n, r))
        codes = stream.normal((ids, r, r))
        offsets = stream.normal((cams, rows, n))
        noise = stream.normal((ids, cams, per_view, rows, n))
        means = np.einsum("ia,kab,jb->kij", p1, codes, p2) / r
        slices = (
            spec.signal * means[:, None, None]
            + spec.view_offset * offsets[None, :, None]
            + spec.noise * noise
        )
        # sample matrix -> vector: concatenate the columns (parts)
        vectors = slices.reshape(ids * cams * per_view, rows, n).transpose(0, 2, 1)
        blocks.append(FeatureBlock(vectors.reshape(-1, d), f"block{b + 1}"))

    person = np.repeat(np.arange(ids), cams * per_view)
    camera = np.tile(np.repeat(np.arange(1, cams + 1), per_view), ids)
    sample = np.arange(ids * cams * per_view)
    labels = Labels(
        [f"s{i:05d}" for i in sample],
        [f"p{i:04d}" for i in person],
        camera,
    )
    return blocks, labels


# -- experiment configuration ----------------------------------------------


def _parse_dim(entry):
    if entry == AUTO or entry is None:
        return (AUTO, AUTO)
    if isinstance(entry, (int, np.integer)) and not isinstance(entry, bool):
        return (int(entry), None)  # n' defaults to the full part count
    if isinstance(entry, str):
        text = entry.strip().lower()
        if text == AUTO:
            return (AUTO, AUTO)
        if "x" not in text:
            try:
                return (int(text), None)
            except ValueError:
                raise ArgumentError(f"bad dimension entry {entry!r}") from None
        entry = [p.strip() for p in text.split("x")]
    entry = list(entry)
    if len(entry) != 2:
        raise ArgumentError(f"dimension entry must be 'auto', an int or a pair, got {entry!r}")
    try:
        return tuple(AUTO if e == AUTO else int(e) for e in entry)
    except (TypeError, ValueError):
        raise ArgumentError(f"bad dimension entry {entry!r}") from None


def dim_label(dims):
    s, n = dims
    if s == AUTO and n == AUTO:
        return AUTO
    if n is None:
        return str(s)
    return f"{s}x{n}"


@dataclass
class ExperimentConfig:
    """Protocol settings.

    ``dims`` lists the sweep: ``"auto"``, an int ``s'`` (``n'`` kept at the
    full part count) or a pair ``(s', n')``. ``configurations`` maps a
    name to block indices; by default every block alone plus all blocks
    fused. ``train_count`` (identities) overrides ``train_fraction``.
    """

    trials: int = 10
    train_fraction: float = 0.5
    train_count: int = None
    seed: int = 0
    dims: list = field(default_factory=lambda: [AUTO])
    txqda: TxqdaConfig = field(default_factory=TxqdaConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    ranks: tuple = DEFAULT_RANKS
    configurations: dict = None
    baseline: bool = True
    gallery_camera: str = None
    threads: int = 1

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ArgumentError(f"trials must be >= 1, got {self.trials!r}")
        self.trials = int(self.trials)
        if self.train_count is None and not 0 < self.train_fraction < 1:
            raise ArgumentError(f"train_fraction must lie in (0, 1), got {self.train_fraction!r}")
        if isinstance(self.dims, (str, int)):
            self.dims = [self.dims]
        self.dims = [_parse_dim(d) for d in self.dims]
        if not self.dims:
            raise ArgumentError("dimension sweep is empty")
        self.ranks = tuple(int(k) for k in self.ranks)
        if not self.ranks or min(self.ranks) < 1:
            raise ArgumentError(f"ranks must be positive, got {self.ranks}")
        if isinstance(self.txqda, dict):
            self.txqda = TxqdaConfig(**self.txqda)
        if isinstance(self.fusion, dict):
            self.fusion = FusionConfig(**self.fusion)

    def to_dict(self):
        return {
            "trials": self.trials,
            "train_fraction": self.train_fraction,
            "train_count": self.train_count,
            "seed": self.seed,
            "dims": [dim_label(d) for d in self.dims],
            "txqda": self.txqda.to_dict(),
            "fusion": {"n_parts": self.fusion.n_parts, "normalize": self.fusion.normalize},
            "ranks": list(self.ranks),
            "configurations": self.configurations,
            "baseline": self.baseline,
            "gallery_camera": self.gallery_camera,
        }


def split_trial(ids, cfg, trial_index):
    """Disjoint identity-level split for one trial.

    The identity list is de-duplicated and sorted, then permuted by the
    stream ``SplitMix64(cfg.seed).spawn(trial_index)``; the first
    ``n_train`` identities train, the rest test.
    """
    pool = sorted(set(np.asarray(ids).tolist()), key=str)
    if len(pool) < 2:
        raise DataError(f"need at least two identities to split, got {len(pool)}")
    if cfg.train_count is not None:
        n_train = int(cfg.train_count)
    else:
        n_train = int(np.floor(cfg.train_fraction * len(pool)))
    if not 1 <= n_train < len(pool):
        raise DataError(f"cannot train on {n_train} of {len(pool)} identities")
    perm = SplitMix64(cfg.seed).spawn(trial_index).permutation(len(pool))
    train = [pool[i] for i in perm[:n_train]]
    test = [pool[i] for i in perm[n_train:]]
    return train, test


# -- running ---------------------------------------------------------------


@dataclass
class TrialReport:
    index: int
    train_ids: list
    test_ids: list
    curves: dict = field(default_factory=dict)
    chosen_dims: dict = field(default_factory=dict)
    objective_traces: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    configurations: dict
    rows: list
    trials: list
    mean: dict
    std: dict
    skipped: list = field(default_factory=list)

    def rank_row(self, name, label, ks=None):
        ks = ks or self.config.ranks
        return rank_k(self.mean[(name, label)], ks)


def default_configurations(blocks):
    names = [b.source_tag for b in blocks]
    configs = {name: [i] for i, name in enumerate(names)}
    if len(blocks) > 1:
        configs["+".join(names)] = list(range(len(blocks)))
    return configs


def _views(cams, gallery_camera):
    unique = sorted(set(cams.tolist()), key=str)
    if len(unique) != 2:
        raise DataError(f"need exactly two cameras, found {unique}")
    if gallery_camera is None:
        return unique[0], unique[1]
    if gallery_camera not in unique:
        raise DataError(f"gallery camera {gallery_camera!r} not among {unique}")
    other = unique[1] if unique[0] == gallery_camera else unique[0]
    return gallery_camera, other


def _run_trial(index, split, tensors, labels, cfg, k_max, gallery_cam):
    train_ids, test_ids = split
    report = TrialReport(index, list(train_ids), list(test_ids))
    train = np.isin(labels.person_ids, train_ids)
    test = np.isin(labels.person_ids, test_ids)
    gallery = test & (labels.camera_ids == gallery_cam)
    probes = test & (labels.camera_ids != gallery_cam)
    for name, tensor in tensors.items():
        s, n, _ = tensor.shape
        if cfg.baseline:
            t0 = time.perf_counter()
            ranking = score_and_rank(
                tensor[:, :, gallery], labels.person_ids[gallery],
                tensor[:, :, probes], labels.person_ids[probes],
            )
            report.curves[(name, RAW)] = cmc(ranking, k_max)
            report.timings[(name, RAW)] = time.perf_counter() - t0
        data = CrossViewSet(
            tensor[:, :, train], labels.person_ids[train], labels.camera_ids[train], gallery_cam
        )
        for dims in cfg.dims:
            label = dim_label(dims)
            target = (dims[0], n if dims[1] is None else dims[1])
            if any(t != AUTO and t > size for t, size in zip(target, (s, n))):
                continue
            t0 = time.perf_counter()
            tx = dataclasses.replace(cfg.txqda, target_dims=target)
            model = fit(data, tx)
            ranking = score_and_rank(
                transform(model, tensor[:, :, gallery]), labels.person_ids[gallery],
                transform(model, tensor[:, :, probes]), labels.person_ids[probes],
            )
            report.curves[(name, label)] = cmc(ranking, k_max)
            report.chosen_dims[(name, label)] = model.output_dims
            report.objective_traces[(name, label)] = model.objective_trace
            report.timings[(name, label)] = time.perf_counter() - t0
    return report


def run_experiment(blocks, labels, cfg=None):
    """Run ``cfg.trials`` random-split trials and aggregate their CMC curves.

    Fusion is computed once per feature configuration over all samples; it
    acts on each sample independently and uses no labels. TXQDA only ever
    sees samples of training identities.
    """
    cfg = cfg or ExperimentConfig()
    blocks = [b if isinstance(b, FeatureBlock) else FeatureBlock(b) for b in blocks]
    if any(b.m != len(labels) for b in blocks):
        raise DataError(
            f"label count {len(labels)} does not match sample counts {[b.m for b in blocks]}"
        )
    configs = cfg.configurations or default_configurations(blocks)
    tensors = {}
    for name, members in configs.items():
        try:
            tensors[name] = hdff_pipeline([blocks[i] for i in members], cfg.fusion)
        except IndexError:
            raise ArgumentError(f"configuration {name!r} references missing block") from None

    gallery_cam, _ = _views(labels.camera_ids, cfg.gallery_camera)
    splits = [split_trial(labels.person_ids, cfg, i) for i in range(cfg.trials)]
    gallery_sizes = [
        int(np.sum(np.isin(labels.person_ids, test) & (labels.camera_ids == gallery_cam)))
        for _, test in splits
    ]
    if min(gallery_sizes) == 0:
        raise DataError("a trial has an empty gallery")
    k_max = max(max(cfg.ranks), min(gallery_sizes))

    def one(i):
        try:
            return _run_trial(i, splits[i], tensors, labels, cfg, k_max, gallery_cam)
        except TensorReidError as exc:
            raise type(exc)(f"trial {i}: {exc}") from exc

    if cfg.threads and cfg.threads > 1 and cfg.trials > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            trials = list(pool.map(one, range(cfg.trials)))
    else:
        trials = [one(i) for i in range(cfg.trials)]

    rows = []
    for name, tensor in tensors.items():
        if cfg.baseline:
            rows.append((name, RAW))
        rows.extend((name, dim_label(d)) for d in cfg.dims)
    mean, std, skipped = {}, {}, []
    for key in rows:
        curves = [t.curves.get(key) for t in trials]
        if any(c is None for c in curves):
            skipped.append(key)
            continue
        stack = np.vstack([c.values for c in curves])
        mean[key] = stack.mean(axis=0)
        std[key] = stack.std(axis=0)
    if skipped:
        log.warning("dimension settings exceeding the tensor size were skipped: %s", skipped)
    rows = [k for k in rows if k not in skipped]
    return ExperimentResult(cfg, configs, rows, trials, mean, std, skipped)


# -- reporting -------------------------------------------------------------


def rank_headers(ranks):
    return [f"Rank-{k}" for k in ranks]


def format_markdown(result):
    """One ``Dim | Rank-k ...`` table per feature configuration."""
    out = ["# CMC scores (%)", ""]
    heads = ["Dim"] + rank_headers(result.config.ranks)
    for name in result.configurations:
        keys = [k for k in result.rows if k[0] == name]
        if not keys:
            continue
        out.append(f"## {name}")
        out.append("")
        out.append("| " + " | ".join(heads) + " |")
        out.append("|" + "|".join(["---"] + ["---:"] * (len(heads) - 1)) + "|")
        for key in keys:
            out.append("| " + " | ".join([key[1]] + result.rank_row(*key)) + " |")
        out.append("")
    return "\n".join(out)


def format_table_csv(result):
    heads = ["configuration", "Dim"] + rank_headers(result.config.ranks)
    lines = [",".join(heads)]
    for key in result.rows:
        lines.append(",".join([key[0], key[1]] + result.rank_row(*key)))
    return "\n".join(lines) + "\n"


def format_aggregate_csv(result):
    lines = ["configuration,Dim,rank,mean,std"]
    for key in result.rows:
        for r, (m, s) in enumerate(zip(result.mean[key], result.std[key]), start=1):
            lines.append(f"{key[0]},{key[1]},{r},{float(m)!r},{float(s)!r}")
    return "\n".join(lines) + "\n"


def format_trial_csv(report, rows):
    lines = ["configuration,Dim,rank,probability"]
    for key in rows:
        for r, v in enumerate(report.curves[key].values, start=1):
            lines.append(f"{key[0]},{key[1]},{r},{float(v)!r}")
    return "\n".join(lines) + "\n"


def format_plot_data(result, key, max_rank=20):
    lines = ["rank,probability"]
    for r, v in enumerate(result.mean[key][:max_rank], start=1):
        lines.append(f"{r},{float(v)!r}")
    return "\n".join(lines) + "\n"


def summary(result, include_timings=False):
    """JSON-ready summary; wall-clock timings only on request."""
    ranks = result.config.ranks
    entries = []
    for key in result.rows:
        mean, std = result.mean[key], result.std[key]
        entry = {
            "configuration": key[0],
            "dim": key[1],
            "rank_mean": {str(k): float(mean[k - 1]) for k in ranks},
            "rank_std": {str(k): float(std[k - 1]) for k in ranks},
            "chosen_dims": [
                list(t.chosen_dims[key]) if key in t.chosen_dims else None for t in result.trials
            ],
        }
        if include_timings:
            entry["seconds_per_trial"] = [t.timings.get(key) for t in result.trials]
        entries.append(entry)
    return {
        "config": result.config.to_dict(),
        "configurations": result.configurations,
        "trials": [
            {"index": t.index, "train_ids": t.train_ids, "test_ids": t.test_ids}
            for t in result.trials
        ],
        "results": entries,
        "skipped": [list(k) for k in result.skipped],
    }

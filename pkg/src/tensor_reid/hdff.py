"""High-dimensional feature fusion.

Each feature vector of length ``d`` is cut into ``n`` equal consecutive
parts that become the columns of a ``(d/n) x n`` sample matrix. Stacking the
sample matrices of one feature source gives a ``(d/n, n, m)`` tensor, and
tensors of different sources are concatenated along mode 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .tensor_core import as_tensor3

NORMALIZE_CHOICES = ("none", "l2_per_vector")


@dataclass
class FeatureBlock:
    """``m`` feature vectors of equal length ``d`` from one source.

    ``vectors`` is stored as an ``(m, d)`` float64 array, one row per sample.
    """

    vectors: np.ndarray
    source_tag: str = "features"

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim == 1:
            vecs = vecs[None, :]
        if vecs.ndim != 2 or vecs.shape[0] < 1 or vecs.shape[1] < 1:
            raise ArgumentError(
                f"block {self.source_tag!r}: need m >= 1 vectors of length d > 0, "
                f"got shape {vecs.shape}"
            )
        if not np.all(np.isfinite(vecs)):
            raise ArgumentError(f"block {self.source_tag!r} contains non-finite entries")
        self.vectors = vecs

    @property
    def m(self):
        return self.vectors.shape[0]

    @property
    def d(self):
        return self.vectors.shape[1]


@dataclass
class FusionConfig:
    n_parts: int = 4
    normalize: str = "l2_per_vector"

    def __post_init__(self):
        if isinstance(self.n_parts, bool) or int(self.n_parts) != self.n_parts or self.n_parts < 1:
            raise ArgumentError(f"n_parts must be a positive integer, got {self.n_parts!r}")
        self.n_parts = int(self.n_parts)
        if self.normalize not in NORMALIZE_CHOICES:
            raise ArgumentError(
                f"normalize must be one of {NORMALIZE_CHOICES}, got {self.normalize!r}"
            )


def _check_divisible(d, n):
    if n < 1 or d % n:
        raise ArgumentError(f"n={n} parts does not divide feature length d={d}")
    return d // n


def split_to_sample_matrix(x, n):
    """Cut ``x`` into ``n`` consecutive parts; part ``p`` is column ``p``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    rows = _check_divisible(x.size, int(n))
    return x.reshape((rows, n), order="F")


def build_view_tensor(block, n):
    """Stack the split sample matrices of ``block`` into a ``(d/n, n, m)`` tensor."""
    if not isinstance(block, FeatureBlock):
        block = FeatureBlock(block)
    rows = _check_divisible(block.d, int(n))
    # row i of vectors -> slice i; column-major reshape realises the split
    return np.ascontiguousarray(block.vectors.T).reshape((rows, n, block.m), order="F")


def fuse(a, b):
    """Concatenate ``a`` then ``b`` along mode 1."""
    a = as_tensor3(a, "a")
    b = as_tensor3(b, "b")
    for mode in (2, 3):
        if a.shape[mode - 1] != b.shape[mode - 1]:
            raise ArgumentError(
                f"cannot fuse: mode-{mode} sizes differ ({a.shape[mode - 1]} vs "
                f"{b.shape[mode - 1]})"
            )
    return np.concatenate([a, b], axis=0)


def l2_normalize_rows(vectors):
    """Scale each row to unit Euclidean norm; all-zero rows pass through."""
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return vectors / safe


def hdff_pipeline(blocks, cfg=None):
    """Fuse an ordered list of feature blocks into one ``(s, n, m)`` tensor.

    ``s`` is the sum of ``d_i / n`` over blocks; block order is kept as given.
    """
    cfg = cfg or FusionConfig()
    blocks = [b if isinstance(b, FeatureBlock) else FeatureBlock(b) for b in blocks]
    if not blocks:
        raise ArgumentError("need at least one feature block")
    m = blocks[0].m
    for b in blocks[1:]:
        if b.m != m:
            raise ArgumentError(
                f"inconsistent sample counts: block {blocks[0].source_tag!r} has {m}, "
                f"block {b.source_tag!r} has {b.m}"
            )
    for b in blocks:
        _check_divisible(b.d, cfg.n_parts)
    fused = None
    for b in blocks:
        if cfg.normalize == "l2_per_vector":
            b = FeatureBlock(l2_normalize_rows(b.vectors), b.source_tag)
        view = build_view_tensor(b, cfg.n_parts)
        fused = view if fused is None else fuse(fused, view)
    return fused


def recover_vectors(tensor, ds, n):
    """Invert the fusion layout: return one ``(m, d_i)`` array per block."""
    tensor = as_tensor3(tensor)
    rows = [_check_divisible(d, n) for d in ds]
    if sum(rows) != tensor.shape[0] or tensor.shape[1] != n:
        raise ArgumentError(
            f"tensor dims {tensor.shape} inconsistent with block lengths {list(ds)} and n={n}"
        )
    out = []
    start = 0
    for d, r in zip(ds, rows):
        slab = tensor[start:start + r]
        out.append(slab.reshape((d, tensor.shape[2]), order="F").T.copy())
        start += r
    return out

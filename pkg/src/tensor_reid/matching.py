"""Cosine matching of probes against a gallery and CMC evaluation."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError
from .tensor_core import as_tensor3

log = logging.getLogger(__name__)

DEFAULT_RANKS = (1, 5, 10, 15, 20)


class ZeroNormWarning(RuntimeWarning):
    """A zero vector took part in a cosine comparison and scored 0."""


def cosine(x, y):
    """Cosine similarity clamped to [-1, 1].

    A zero-norm input yields 0.0 and emits :class:`ZeroNormWarning`.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ArgumentError(f"cosine needs equal lengths, got {x.size} and {y.size}")
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0 or ny == 0:
        warnings.warn("cosine of a zero-norm vector defined as 0", ZeroNormWarning, stacklevel=2)
        return 0.0
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def cosine_matrix(probes, gallery):
    """Pairwise cosine between rows of ``probes`` and rows of ``gallery``.

    Rows with zero norm score 0 against everything. Returns the score matrix
    and a boolean mask of the degenerate probe and gallery rows.
    """
    pn = np.linalg.norm(probes, axis=1)
    gn = np.linalg.norm(gallery, axis=1)
    p_zero = pn == 0
    g_zero = gn == 0
    p_unit = probes / np.where(p_zero, 1.0, pn)[:, None]
    g_unit = gallery / np.where(g_zero, 1.0, gn)[:, None]
    scores = np.clip(p_unit @ g_unit.T, -1.0, 1.0)
    scores[p_zero, :] = 0.0
    scores[:, g_zero] = 0.0
    return scores, p_zero, g_zero


@dataclass
class RankingResult:
    """Gallery ordering for every probe.

    ``order[p]`` lists gallery indices best first and ``scores[p]`` the
    matching similarities (non-increasing).
    """

    order: np.ndarray
    scores: np.ndarray
    probe_ids: np.ndarray
    gallery_ids: np.ndarray
    degenerate_probes: np.ndarray = None
    degenerate_gallery: np.ndarray = None

    @property
    def n_probes(self):
        return self.order.shape[0]

    @property
    def n_gallery(self):
        return self.order.shape[1]


def _slices_as_rows(t):
    # row i = vectorized mode-3 slice i
    return t.reshape((-1, t.shape[2]), order="F").T


def score_and_rank(gallery, gallery_ids, probes, probe_ids):
    """Rank every gallery slice for every probe slice by cosine similarity.

    Ties are broken by ascending gallery index.
    """
    gallery = as_tensor3(gallery, "gallery")
    probes = as_tensor3(probes, "probes")
    if gallery.shape[:2] != probes.shape[:2]:
        raise ArgumentError(
            f"gallery slices {gallery.shape[:2]} and probe slices {probes.shape[:2]} differ"
        )
    gallery_ids = np.asarray(gallery_ids)
    probe_ids = np.asarray(probe_ids)
    if gallery_ids.shape != (gallery.shape[2],) or probe_ids.shape != (probes.shape[2],):
        raise ArgumentError("id arrays must match the number of gallery and probe samples")
    scores, p_zero, g_zero = cosine_matrix(_slices_as_rows(probes), _slices_as_rows(gallery))
    if p_zero.any() or g_zero.any():
        log.warning(
            "%d probe(s) and %d gallery sample(s) have zero norm; their scores are 0",
            int(p_zero.sum()),
            int(g_zero.sum()),
        )
    order = np.argsort(-scores, axis=1, kind="stable")
    ranked = np.take_along_axis(scores, order, axis=1)
    return RankingResult(order, ranked, probe_ids, gallery_ids, p_zero, g_zero)


@dataclass
class CmcCurve:
    """``values[r]`` is the fraction of probes matched within the top ``r + 1``."""

    values: np.ndarray

    def __len__(self):
        return len(self.values)


def match_ranks(r):
    """1-based rank of the first correct gallery entry for every probe."""
    hits = r.gallery_ids[r.order] == r.probe_ids[:, None]
    found = hits.any(axis=1)
    if not found.all():
        missing = sorted(set(r.probe_ids[~found].tolist()), key=str)
        raise DataError(f"probe identities absent from gallery (open set): {missing[:20]}")
    return hits.argmax(axis=1) + 1


def cmc(r, k_max=None):
    """Cumulative match characteristic up to rank ``k_max`` (default: gallery size)."""
    if k_max is None:
        k_max = r.n_gallery
    if int(k_max) != k_max or k_max < 1:
        raise ArgumentError(f"k_max must be a positive integer, got {k_max!r}")
    ranks = match_ranks(r)
    counts = np.bincount(np.minimum(ranks, k_max + 1), minlength=k_max + 2)[1:k_max + 1]
    return CmcCurve(np.cumsum(counts) / len(ranks))


def rank_k(c, ks=DEFAULT_RANKS):
    """Percentages at the requested ranks, as two-decimal strings."""
    values = c.values if isinstance(c, CmcCurve) else np.asarray(c)
    row = []
    for k in ks:
        if int(k) != k or not 1 <= k <= len(values):
            raise ArgumentError(f"rank {k} outside curve length {len(values)}")
        row.append(f"{100.0 * values[int(k) - 1]:.2f}")
    return row

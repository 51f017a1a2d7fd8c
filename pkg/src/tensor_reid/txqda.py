"""Tensor cross-view quadratic discriminant analysis (TXQDA).

Learns a mode-1 (feature) and a mode-2 (part) projection for tensors of
shape ``(s, n, m)`` whose mode-3 slices are samples seen by one of two
cameras. For each mode the scatter of cross-view differences between
samples of the same person (intrinsic) is traded against the scatter of
cross-view differences between different persons (extrinsic):

    maximize  Tr(U^T V_E U) / Tr(U^T V_I U)

The trace ratio has no closed form. Each mode is solved through the
generalized eigenproblem ``V_E u = lambda (V_I + lam I) u`` with the other
mode's projection held fixed, and the two modes alternate.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DataError
from .spectral import gen_eig, sym_eig
from .tensor_core import as_matrix, as_tensor3, project

log = logging.getLogger(__name__)

AUTO = "auto"
DEFAULT_LAMBDA_SCALE = 1e-3


@dataclass
class CrossViewSet:
    """Labelled sample slices captured by two cameras.

    ``tensor`` has shape ``(s, n, m)``; ``person_ids`` and ``camera_ids``
    have length ``m``. The gallery camera defaults to the smaller of the two
    camera labels.
    """

    tensor: np.ndarray
    person_ids: np.ndarray
    camera_ids: np.ndarray
    gallery_camera: object = None

    def __post_init__(self):
        self.tensor = as_tensor3(self.tensor)
        self.person_ids = np.asarray(self.person_ids)
        self.camera_ids = np.asarray(self.camera_ids)
        m = self.tensor.shape[2]
        if self.person_ids.shape != (m,) or self.camera_ids.shape != (m,):
            raise DataError(
                f"label arrays must have length m={m}, got {self.person_ids.shape} "
                f"and {self.camera_ids.shape}"
            )
        cams = list(np.unique(self.camera_ids))
        if len(cams) != 2:
            raise DataError(f"need exactly two camera views, found {cams}")
        if self.gallery_camera is None:
            self.gallery_camera = cams[0]
        elif self.gallery_camera not in cams:
            raise DataError(f"gallery camera {self.gallery_camera!r} not among {cams}")
        if len(np.unique(self.person_ids)) < 2:
            raise DataError("need at least two distinct persons")

    @property
    def probe_camera(self):
        a, b = np.unique(self.camera_ids)
        return b if a == self.gallery_camera else a

    def view_masks(self):
        in_a = self.camera_ids == self.gallery_camera
        return in_a, ~in_a

    def unpaired_persons(self):
        """Persons lacking a sample in one of the two views."""
        in_a, in_b = self.view_masks()
        seen_a = set(self.person_ids[in_a].tolist())
        seen_b = set(self.person_ids[in_b].tolist())
        return sorted(seen_a ^ seen_b, key=str)

    def subset(self, mask):
        mask = np.asarray(mask)
        return CrossViewSet(
            self.tensor[:, :, mask],
            self.person_ids[mask],
            self.camera_ids[mask],
            self.gallery_camera,
        )


@dataclass
class TxqdaConfig:
    """``target_dims`` is ``"auto"`` or a pair ``(s', n')`` whose entries
    are ints or ``"auto"``; ``lam=None`` selects the scale-aware default."""

    target_dims: object = AUTO
    lam: float = None
    max_iters: int = 5
    tol: float = 1e-6
    eig_method: str = "auto"
    monotone: bool = True

    def __post_init__(self):
        dims = self.target_dims
        if dims == AUTO or dims is None:
            dims = (AUTO, AUTO)
        if len(dims) != 2:
            raise ArgumentError(f"target_dims must be 'auto' or a pair, got {dims!r}")
        clean = []
        for d in dims:
            if d == AUTO or d is None:
                clean.append(AUTO)
            elif isinstance(d, (int, np.integer)) and not isinstance(d, bool) and d >= 1:
                clean.append(int(d))
            else:
                raise ArgumentError(f"target dims must be positive ints or 'auto', got {d!r}")
        self.target_dims = tuple(clean)
        if self.lam is not None and not self.lam >= 0:
            raise ArgumentError(f"lambda must be nonnegative, got {self.lam!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ArgumentError(f"max_iters must be >= 1, got {self.max_iters!r}")
        self.max_iters = int(self.max_iters)
        if not self.tol >= 0:
            raise ArgumentError(f"tol must be nonnegative, got {self.tol!r}")

    def to_dict(self):
        return {
            "target_dims": list(self.target_dims),
            "lam": self.lam,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "eig_method": self.eig_method,
            "monotone": self.monotone,
        }


@dataclass
class ProjectionSet:
    u1: np.ndarray
    u2: np.ndarray
    spectra: list
    objective_trace: list
    lambdas: list = field(default_factory=lambda: [None, None])
    n_iter: int = 0
    converged: bool = False
    steps: list = field(default_factory=lambda: [[], []])

    @property
    def input_dims(self):
        return self.u1.shape[0], self.u2.shape[0]

    @property
    def output_dims(self):
        return self.u1.shape[1], self.u2.shape[1]


# -- scatter matrices ------------------------------------------------------


def _mode_rows(tensor, u_other, k):
    """Project each slice on the opposite mode; return ``(m, I_k, q)``."""
    if k == 1:
        if u_other.shape[0] != tensor.shape[1]:
            raise ArgumentError(
                f"mode-2 projection must have {tensor.shape[1]} rows, got {u_other.shape}"
            )
        return np.einsum("ijm,jb->mib", tensor, u_other, optimize=True)
    if k == 2:
        if u_other.shape[0] != tensor.shape[0]:
            raise ArgumentError(
                f"mode-1 projection must have {tensor.shape[0]} rows, got {u_other.shape}"
            )
        return np.einsum("ijm,ia->mja", tensor, u_other, optimize=True)
    raise ArgumentError(f"scatter mode must be 1 or 2, got {k!r}")


def _first_occurrence_classes(ids):
    """Unique labels in order of first appearance, plus per-sample class index."""
    order = {}
    index = np.empty(len(ids), dtype=np.intp)
    for pos, label in enumerate(ids.tolist()):
        index[pos] = order.setdefault(label, len(order))
    return list(order), index


def paired_mask(data):
    """Mask of samples whose person appears in both views; logs the rest."""
    missing = data.unpaired_persons()
    if missing:
        log.warning(
            "excluding %d person(s) without a cross-view counterpart: %s",
            len(missing),
            missing[:10],
        )
        return ~np.isin(data.person_ids, np.asarray(missing, dtype=data.person_ids.dtype))
    return np.ones(len(data.person_ids), dtype=bool)


def scatter_pair(data, u_other, k):
    """Extrinsic and intrinsic cross-view scatter matrices for mode ``k``.

    Every slice is first projected on the opposite mode. For a cross-view pair
    with difference ``D`` the contribution is ``D_(k) D_(k)^T``; intrinsic pairs
    share a person, extrinsic pairs do not. Each sum is divided by its pair
    count. Pair sums are assembled from per-class first and second moments,
    so the cost is linear in the number of samples.

    Returns
    -------
    v_e, v_i : ndarray, shape (I_k, I_k)
    """
    u_other = as_matrix(u_other, "u_other")
    keep = paired_mask(data)
    tensor = data.tensor[:, :, keep]
    pids = data.person_ids[keep]
    in_a = (data.camera_ids == data.gallery_camera)[keep]

    z = _mode_rows(tensor, u_other, k)
    dim = z.shape[1]
    classes, cls = _first_occurrence_classes(pids)
    n_cls = len(classes)

    # per-class first moments (I_k x q) and second moments (I_k x I_k) per view
    sums = np.zeros((2, n_cls) + z.shape[1:])
    grams = np.zeros((2, n_cls, dim, dim))
    counts = np.zeros((2, n_cls))
    gram_each = np.einsum("mia,mja->mij", z, z, optimize=True)
    slot = (np.where(in_a, 0, 1), cls)
    np.add.at(sums, slot, z)
    np.add.at(grams, slot, gram_each)
    np.add.at(counts, slot, 1.0)

    intrinsic = np.zeros((dim, dim))
    for c in range(n_cls):
        na, nb = counts[0, c], counts[1, c]
        if na == 0 or nb == 0:
            continue
        cross = sums[0, c] @ sums[1, c].T
        intrinsic += nb * grams[0, c] + na * grams[1, c] - cross - cross.T
    n_intra = float(np.dot(counts[0], counts[1]))

    na_tot, nb_tot = counts[0].sum(), counts[1].sum()
    g_a = grams[0].sum(axis=0)
    g_b = grams[1].sum(axis=0)
    s_a = sums[0].sum(axis=0)
    s_b = sums[1].sum(axis=0)
    cross = s_a @ s_b.T
    total = nb_tot * g_a + na_tot * g_b - cross - cross.T
    n_extra = float(na_tot * nb_tot - n_intra)

    if n_intra == 0:
        raise DataError("no intrinsic (same person, cross-view) pairs in training data")
    if n_extra == 0:
        raise DataError("no extrinsic (different person, cross-view) pairs in training data")

    v_i = intrinsic / n_intra
    v_e = (total - intrinsic) / n_extra
    return 0.5 * (v_e + v_e.T), 0.5 * (v_i + v_i.T)


# -- per-mode solve --------------------------------------------------------


def default_lambda(v_i, v_e=None):
    """``1e-3 * trace(V_I) / dim``, falling back to ``V_E`` and then 1 when zero.

    ``V_I`` counts as zero once its trace is below ``1e-12 * trace(V_E)``; the
    class-sum assembly leaves rounding residue rather than exact zeros.
    """
    dim = v_i.shape[0]
    lam = DEFAULT_LAMBDA_SCALE * np.trace(v_i) / dim
    if v_e is not None and np.trace(v_i) <= 1e-12 * np.trace(v_e):
        lam = DEFAULT_LAMBDA_SCALE * np.trace(v_e) / dim
    if lam <= 0:
        lam = 1.0
    return float(lam)


def solve_mode(v_e, v_i, lam=None, target=AUTO, method="auto"):
    """Top generalized eigenvectors of ``(V_E, V_I + lam I)``.

    ``target="auto"`` keeps every eigenvalue above 1, and at least one.
    Columns are ``(V_I + lam I)``-orthogonal, so projecting also whitens the
    intrinsic scatter; they share one scale factor chosen so that the mean
    squared column norm is 1. Without it, the scales of ``u1`` and ``u2``
    could drift against each other from sweep to sweep.

    Returns
    -------
    u : ndarray, shape (dim, target)
    spectrum : ndarray
        All generalized eigenvalues, descending.
    """
    v_e = as_matrix(v_e, "v_e")
    v_i = as_matrix(v_i, "v_i")
    if v_e.shape != v_i.shape or v_e.shape[0] != v_e.shape[1]:
        raise ArgumentError(f"scatter matrices must be square and equal: {v_e.shape}, {v_i.shape}")
    dim = v_e.shape[0]
    if lam is None:
        lam = default_lambda(v_i, v_e)
    pairs = gen_eig(v_e, v_i + lam * np.eye(dim), method=method)
    if target == AUTO:
        keep = max(1, int(np.count_nonzero(pairs.values > 1.0)))
    else:
        keep = int(target)
        if not 1 <= keep <= dim:
            raise ArgumentError(f"target dimension {keep} outside 1..{dim}")
    u = pairs.vectors[:, :keep]
    # one common factor fixes the scale (mean column norm 1); the relative
    # column scales carry the whitening and are kept
    return u * np.sqrt(keep / np.sum(u * u)), pairs.values


def trace_ratio(u, v_e, v_i):
    """``Tr(U^T V_E U) / Tr(U^T V_I U)``; ``inf`` when the denominator vanishes
    (relative to the numerator)."""
    num = float(np.trace(u.T @ v_e @ u))
    den = float(np.trace(u.T @ v_i @ u))
    if _negligible(den, num):
        return float("inf") if num > 0 else 0.0
    return num / den


def _negligible(den, num):
    # rounding residue of an intrinsic scatter that is zero in exact arithmetic
    return den <= 1e-12 * abs(num)


# -- alternating fit -------------------------------------------------------


def _target_for(cfg, k, size):
    t = cfg.target_dims[k - 1]
    if t != AUTO and t > size:
        raise ArgumentError(f"target mode-{k} dim {t} exceeds input size {size}")
    return t


def _projector_gap(u_new, u_old):
    return float(np.linalg.norm(u_new @ u_new.T - u_old @ u_old.T))


def trace_ratio_refine(v_e, v_i, width, method="auto", max_iters=100):
    """Orthonormal maximizer of the trace ratio by iterating
    ``U <- top eigenvectors of (V_E - rho V_I)``, ``rho <- ratio(U)``.

    Starts from ``rho = Tr(V_E) / Tr(V_I)``, the ratio of the full identity
    basis, and never returns a basis scoring below it.
    """
    den = float(np.trace(v_i))
    if _negligible(den, float(np.trace(v_e))):
        return sym_eig(v_e, method).vectors[:, :width].copy()
    rho = float(np.trace(v_e)) / den
    best = None
    for _ in range(max_iters):
        u = sym_eig(v_e - rho * v_i, method).vectors[:, :width]
        value = trace_ratio(u, v_e, v_i)
        if value <= rho * (1.0 + 1e-14):
            if best is None:
                best = u
            break
        best, rho = u, value
    return best.copy()


def _update_mode(data, u_other, u_current, k, target, cfg, guard):
    """One mode update: ratio-trace solve, then the monotone safeguard.

    Returns ``(u, spectrum, objective, lam, step)`` where ``step`` says which
    rule produced ``u``: ``"solve"``, ``"kept"`` or ``"trace_ratio"``.
    """
    v_e, v_i = scatter_pair(data, u_other, k)
    lam = cfg.lam if cfg.lam is not None else default_lambda(v_i, v_e)
    u, spectrum = solve_mode(v_e, v_i, lam, target, cfg.eig_method)
    value = trace_ratio(u, v_e, v_i)
    step = "solve"
    if guard:
        reference = trace_ratio(u_current, v_e, v_i)
        if value < reference:
            initial = u_current.shape[0] == u_current.shape[1] and np.array_equal(
                u_current, np.eye(u_current.shape[0])
            )
            if not initial or u_current.shape == u.shape:
                u, value, step = u_current, reference, "kept"
            else:
                alt = trace_ratio_refine(v_e, v_i, u.shape[1], cfg.eig_method)
                alt_value = trace_ratio(alt, v_e, v_i)
                if alt_value > value:
                    u, value, step = alt, alt_value, "trace_ratio"
    return u, spectrum, value, lam, step


def fit(data, cfg=None):
    """Alternate mode-1 and mode-2 solves starting from identity projections.

    Each sweep updates ``u1`` with ``u2`` fixed, then ``u2`` with the new
    ``u1``. Both modes' trace ratios are the same function of ``(u1, u2)``;
    with ``cfg.monotone`` an update that would lower it is rejected (the
    current projection is kept, or on the first sweep replaced by the
    trace-ratio maximizer), so the recorded objective never decreases.

    Stops once both projections change by at most ``cfg.tol`` (measured on
    ``U U^T``), or after ``cfg.max_iters`` sweeps. Hitting the sweep cap is not
    an error; ``ProjectionSet.converged`` records the outcome.
    """
    cfg = cfg or TxqdaConfig()
    s, n, _ = data.tensor.shape
    t1 = _target_for(cfg, 1, s)
    t2 = _target_for(cfg, 2, n)
    u1 = np.eye(s)
    u2 = np.eye(n)
    trace = [[], []]
    steps = [[], []]
    spectra = [None, None]
    lambdas = [None, None]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        new_u1, spectra[0], value, lam1, step = _update_mode(
            data, u2, u1, 1, t1, cfg, guard=cfg.monotone and it > 1
        )
        trace[0].append(value)
        steps[0].append(step)
        new_u2, spectra[1], value, lam2, step = _update_mode(
            data, new_u1, u2, 2, t2, cfg, guard=cfg.monotone
        )
        trace[1].append(value)
        steps[1].append(step)

        gap = max(_projector_gap(new_u1, u1), _projector_gap(new_u2, u2))
        u1, u2 = new_u1, new_u2
        lambdas = [lam1, lam2]
        log.debug("txqda iter %d: objective %.6g, steps %s/%s, projector change %.3e",
                  it, value, steps[0][-1], steps[1][-1], gap)
        if gap <= cfg.tol:
            converged = True
            break
    return ProjectionSet(u1, u2, spectra, trace, lambdas, it, converged, steps)


def transform(p, t):
    """Project a tensor of samples into the learned reduced space."""
    t = as_tensor3(t)
    if t.shape[:2] != p.input_dims:
        raise ArgumentError(
            f"tensor mode sizes {t.shape[:2]} do not match projection inputs {p.input_dims}"
        )
    return project(t, p.u1, p.u2)

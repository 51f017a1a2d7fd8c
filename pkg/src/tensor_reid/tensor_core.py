"""Dense third-order tensors and the basic multilinear operations.

A tensor is a float64 ``ndarray`` of shape ``(I1, I2, I3)``. Mode 3 indexes
samples throughout the package. The flat layout contract is column-major:
the mode-1 index varies fastest, then mode 2, then mode 3, so
``vectorize(t) == t.ravel(order="F")``.

The mode-k unfolding has ``I_k`` rows; its columns enumerate the remaining
two modes in ascending mode order with the lower-numbered mode varying
fastest. Folding, projection and the scatter matrices all rely on this
single convention.
"""

import struct

import numpy as np

from .errors import ArgumentError, DataError

TSR3_MAGIC = b"TSR3"
TSR3_VERSION = 1
_HEADER = struct.Struct("<4sH3I")


def as_tensor3(t, name="tensor"):
    """Return ``t`` as a float64 third-order array, validating its shape."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3:
        raise ArgumentError(f"{name} must be third-order, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ArgumentError(f"{name} dims must be positive, got {arr.shape}")
    return arr


def as_matrix(m, name="matrix"):
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ArgumentError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def _check_mode(k, n_modes=3):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 1 <= k <= n_modes:
        raise ArgumentError(f"mode index must be in 1..{n_modes}, got {k!r}")
    return int(k)


def unfold(t, k):
    """Mode-k matricization.

    Parameters
    ----------
    t : ndarray, shape (I1, I2, I3)
    k : int
        Mode index in {1, 2, 3}.

    Returns
    -------
    ndarray, shape (I_k, prod of the other two dims)
    """
    t = as_tensor3(t)
    k = _check_mode(k)
    return np.moveaxis(t, k - 1, 0).reshape((t.shape[k - 1], -1), order="F")


def fold(m, k, dims):
    """Inverse of :func:`unfold` for a target tensor shape ``dims``."""
    m = as_matrix(m)
    k = _check_mode(k)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ArgumentError(f"dims must be a triple of positive ints, got {dims}")
    rest = [d for i, d in enumerate(dims) if i != k - 1]
    if m.shape != (dims[k - 1], rest[0] * rest[1]):
        raise ArgumentError(
            f"matrix of shape {m.shape} cannot fold along mode {k} into {dims}"
        )
    moved = m.reshape((dims[k - 1], rest[0], rest[1]), order="F")
    return np.moveaxis(moved, 0, k - 1)


def mode_product(t, u, k):
    """Mode-k product ``t x_k u``; replaces ``I_k`` with ``u.shape[0]``."""
    t = as_tensor3(t)
    u = as_matrix(u, "u")
    k = _check_mode(k)
    if u.shape[1] != t.shape[k - 1]:
        raise ArgumentError(
            f"mode-{k} product needs u with {t.shape[k - 1]} columns, got {u.shape}"
        )
    # tensordot contracts u's columns with axis k-1 and appends the new axis last
    out = np.tensordot(t, u, axes=([k - 1], [1]))
    return np.moveaxis(out, 2, k - 1)


def project(t, u1, u2):
    """Tensor-to-tensor projection ``t x_1 u1^T x_2 u2^T``.

    Mode 3 (samples) is left untouched. Each sample slice ``S`` maps to
    ``u1.T @ S @ u2``.
    """
    t = as_tensor3(t)
    u1 = as_matrix(u1, "u1")
    u2 = as_matrix(u2, "u2")
    if u1.shape[0] != t.shape[0] or u2.shape[0] != t.shape[1]:
        raise ArgumentError(
            f"projections {u1.shape}, {u2.shape} do not match tensor dims {t.shape}"
        )
    return np.einsum("ia,ijm,jb->abm", u1, t, u2, optimize=True)


def vectorize(t):
    """Flatten in layout order (mode 1 fastest)."""
    return as_tensor3(t).ravel(order="F")


def frobenius(t):
    return float(np.linalg.norm(vectorize(t)))


def inner(a, b):
    """Scalar product: sum of elementwise products."""
    a = as_tensor3(a, "a")
    b = as_tensor3(b, "b")
    if a.shape != b.shape:
        raise ArgumentError(f"inner product needs equal dims, got {a.shape} and {b.shape}")
    return float(np.dot(a.ravel(order="F"), b.ravel(order="F")))


# -- binary tensor files ---------------------------------------------------


def tsr3_bytes(t):
    t = as_tensor3(t)
    header = _HEADER.pack(TSR3_MAGIC, TSR3_VERSION, *t.shape)
    return header + t.ravel(order="F").astype("<f8").tobytes()


def write_tsr3_stream(fh, t):
    fh.write(tsr3_bytes(t))


def read_tsr3_stream(fh):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise DataError("truncated TSR3 header")
    magic, version, i1, i2, i3 = _HEADER.unpack(raw)
    if magic != TSR3_MAGIC:
        raise DataError(f"bad TSR3 magic {magic!r}")
    if version != TSR3_VERSION:
        raise DataError(f"unsupported TSR3 version {version}")
    count = i1 * i2 * i3
    payload = fh.read(8 * count)
    if len(payload) != 8 * count:
        raise DataError(f"TSR3 payload truncated: expected {count} values")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return data.reshape((i1, i2, i3), order="F")


def write_tsr3(path, t):
    with open(path, "wb") as fh:
        write_tsr3_stream(fh, t)


def read_tsr3(path):
    with open(path, "rb") as fh:
        t = read_tsr3_stream(fh)
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after TSR3 payload")
    return t

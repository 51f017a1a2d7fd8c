"""File formats: feature files, label files, TSR3 tensors and model files.

Feature file::

    #FEAT v1 d=<int> m=<int>
    <d comma-separated floats>      (m lines)

Label file: ``m`` lines ``<sample_id>,<person_id>,<camera_id>``.

Model file: ``b"TXQM"``, a little-endian u32 byte length, a UTF-8 JSON
header of that length, then two TSR3 blocks holding ``u1`` and ``u2`` as
``(rows, cols, 1)`` tensors.
"""

import contextlib
import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .tensor_core import read_tsr3_stream, tsr3_bytes
from .txqda import ProjectionSet

_FEAT_HEADER = re.compile(r"^#FEAT v1 d=(\d+) m=(\d+)\s*$")
MODEL_MAGIC = b"TXQM"
MODEL_VERSION = 1


@contextlib.contextmanager
def atomic_write(path, mode="w"):
    """Write to a temporary sibling file and rename into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": "", "encoding": "utf-8"})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@dataclass
class Labels:
    sample_ids: np.ndarray
    person_ids: np.ndarray
    camera_ids: np.ndarray

    def __post_init__(self):
        self.sample_ids = np.asarray(self.sample_ids, dtype=object).astype(str)
        self.person_ids = np.asarray(self.person_ids, dtype=object).astype(str)
        self.camera_ids = np.asarray(self.camera_ids, dtype=object).astype(str)
        if not len(self.sample_ids) == len(self.person_ids) == len(self.camera_ids):
            raise DataError("label columns differ in length")

    def __len__(self):
        return len(self.sample_ids)

    def subset(self, mask):
        return Labels(self.sample_ids[mask], self.person_ids[mask], self.camera_ids[mask])


def read_features(path):
    """Return the ``(m, d)`` matrix stored in a feature file."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        match = _FEAT_HEADER.match(header)
        if not match:
            raise DataError(f"{path}: bad feature header {header.strip()!r}")
        d, m = int(match.group(1)), int(match.group(2))
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = [float(x) for x in line.split(",")]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if len(row) != d:
                raise DataError(f"{path}:{lineno}: expected {d} values, got {len(row)}")
            rows.append(row)
    if len(rows) != m:
        raise DataError(f"{path}: header says m={m} but found {len(rows)} vectors")
    data = np.array(rows, dtype=np.float64).reshape(m, d)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite feature values")
    return data


def write_features(path, vectors):
    vectors = np.asarray(vectors, dtype=np.float64)
    m, d = vectors.shape
    with atomic_write(path) as fh:
        fh.write(f"#FEAT v1 d={d} m={m}\n")
        for row in vectors.tolist():
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_labels(path):
    path = Path(path)
    cols = ([], [], [])
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected sample_id,person_id,camera_id")
            for col, value in zip(cols, parts):
                col.append(value)
    if not cols[0]:
        raise DataError(f"{path}: no labels")
    return Labels(*cols)


def write_labels(path, labels):
    with atomic_write(path) as fh:
        for row in zip(labels.sample_ids, labels.person_ids, labels.camera_ids):
            fh.write(",".join(row) + "\n")


def _matrix_block(u):
    return tsr3_bytes(np.asarray(u)[:, :, None])


def model_bytes(p, config=None):
    header = {
        "format": "txqda-model",
        "version": MODEL_VERSION,
        "input_dims": list(p.input_dims),
        "output_dims": list(p.output_dims),
        "config": config or {},
        "n_iter": p.n_iter,
        "converged": p.converged,
        "steps": p.steps,
        "lambdas": p.lambdas,
        "objective_trace": p.objective_trace,
        "spectra": [np.asarray(s).tolist() for s in p.spectra],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return (
        MODEL_MAGIC
        + struct.pack("<I", len(blob))
        + blob
        + _matrix_block(p.u1)
        + _matrix_block(p.u2)
    )


def write_model(path, p, config=None):
    with atomic_write(path, "wb") as fh:
        fh.write(model_bytes(p, config))


def read_model(path):
    """Return ``(ProjectionSet, header)`` from a model file."""
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise DataError(f"{path}: not a TXQDA model file")
        (length,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(length).decode("utf-8"))
        except ValueError as exc:
            raise DataError(f"{path}: corrupt model header ({exc})") from None
        u1 = read_tsr3_stream(fh)[:, :, 0]
        u2 = read_tsr3_stream(fh)[:, :, 0]
    p = ProjectionSet(
        u1=u1,
        u2=u2,
        spectra=[np.asarray(s) for s in header["spectra"]],
        objective_trace=header["objective_trace"],
        lambdas=header["lambdas"],
        n_iter=header["n_iter"],
        converged=header["converged"],
        steps=header.get("steps", [[], []]),
    )
    return p, header

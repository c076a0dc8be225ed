"""Single-file dataset format.

A dataset file is a zip archive (``.npz``-compatible) holding, in order:

    format.npy        0-d unicode array, ``"playcs-dataset/1"``
    spec.npy          0-d unicode array, the ScenarioSpec as sorted-key JSON
    truth.npy         complex128 (T, N)
    A.npy             complex128 (T, M, N)
    observations.npy  complex128 (T, M)
    noise.npy         complex128 (T, M)
    noise_var.npy     float64 (T,)

Members are stored uncompressed with a fixed timestamp, so saving the same
dataset twice gives identical bytes. ``numpy.load`` reads the file directly.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile

import numpy as np

from .signals import ScenarioSpec, SequenceDataset

FORMAT = "playcs-dataset/1"
_ARRAYS = ("truth", "A", "observations", "noise", "noise_var")
_DTYPES = {"truth": np.complex128, "A": np.complex128, "observations": np.complex128,
           "noise": np.complex128, "noise_var": np.float64}
_STAMP = (1980, 1, 1, 0, 0, 0)


class DatasetFormatError(ValueError):
    pass


def _spec_json(spec):
    return json.dumps(spec.to_dict(), sort_keys=True)


def _members(ds: SequenceDataset):
    yield "format", np.array(FORMAT)
    yield "spec", np.array(_spec_json(ds.spec))
    for name in _ARRAYS:
        yield name, np.ascontiguousarray(getattr(ds, name), dtype=_DTYPES[name])


def save_dataset(path, ds: SequenceDataset):
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in _members(ds):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_STAMP)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def load_dataset(path) -> SequenceDataset:
    try:
        with np.load(path, allow_pickle=False) as f:
            fmt = str(f["format"])
            if fmt != FORMAT:
                raise DatasetFormatError(f"unsupported dataset format {fmt!r}")
            spec = ScenarioSpec.from_dict(json.loads(str(f["spec"])))
            arrays = {k: f[k] for k in _ARRAYS}
    except KeyError as exc:
        raise DatasetFormatError(f"dataset file is missing {exc}") from exc
    except DatasetFormatError:
        raise
    except (zipfile.BadZipFile, ValueError) as exc:
        raise DatasetFormatError(f"not a dataset file: {exc}") from exc
    return SequenceDataset(spec=spec, **arrays)


def dataset_digest(ds: SequenceDataset) -> str:
    """SHA-256 over the spec JSON and the raw array bytes."""
    h = hashlib.sha256()
    for name, arr in _members(ds):
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes() if arr.dtype.kind != "U" else str(arr).encode())
    return h.hexdigest()

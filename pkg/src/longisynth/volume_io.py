"""Reading and writing volumes as NIfTI-1 or as a raw array with a text header.

The raw format is a single file: one ASCII header line terminated by ``\\n``::

    LSVOL shape=32,32,32 spacing=1.0,1.0,1.0 dtype=float32

followed by the voxel bytes in C order, little endian.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .volume import Volume

RAW_SUFFIX = ".lsvol"
_MAGIC = "LSVOL"


def _is_nifti(path: Path) -> bool:
    name = path.name.lower()
    return name.endswith(".nii") or name.endswith(".nii.gz")


def read_volume(path) -> Volume:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"volume file not found: {path}")
    if _is_nifti(path):
        import nibabel as nib

        img = nib.load(str(path))
        data = np.asarray(img.dataobj, dtype=np.float32)
        if data.ndim == 4 and data.shape[-1] == 1:
            data = data[..., 0]
        spacing = tuple(float(z) for z in img.header.get_zooms()[:3])
        return Volume(data, spacing)
    if path.suffix == RAW_SUFFIX:
        return _read_raw(path)
    raise ValueError(f"unsupported volume format: {path.name}")


def write_volume(v: Volume, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if _is_nifti(path):
        import nibabel as nib

        affine = np.diag([*v.spacing_mm, 1.0])
        img = nib.Nifti1Image(np.asarray(v.voxels, dtype=np.float32), affine)
        img.header.set_zooms(v.spacing_mm)
        nib.save(img, str(path))
    elif path.suffix == RAW_SUFFIX:
        _write_raw(v, path)
    else:
        raise ValueError(f"unsupported volume format: {path.name}")
    return path


def _write_raw(v: Volume, path: Path) -> None:
    arr = np.ascontiguousarray(v.voxels, dtype="<f4")
    header = "{} shape={} spacing={} dtype=float32\n".format(
        _MAGIC,
        ",".join(str(s) for s in arr.shape),
        ",".join(repr(float(s)) for s in v.spacing_mm),
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(arr.tobytes())


def _read_raw(path: Path) -> Volume:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        payload = fh.read()
    if not header or header[0] != _MAGIC:
        raise ValueError(f"{path}: not a {_MAGIC} file")
    fields = dict(item.split("=", 1) for item in header[1:])
    try:
        shape = tuple(int(s) for s in fields["shape"].split(","))
        spacing = tuple(float(s) for s in fields["spacing"].split(","))
        dtype = np.dtype(fields.get("dtype", "float32")).newbyteorder("<")
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header") from exc
    data = np.frombuffer(payload, dtype=dtype)
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {np.prod(shape)} voxels, found {data.size}")
    return Volume(data.reshape(shape).astype(np.float32), spacing)

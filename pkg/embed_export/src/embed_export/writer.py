"""Writer for the binary embedding file format the core toolkit loads.

Layout, all little-endian: the 6-byte magic `NFEMB1`, a u32 dimension,
then per sample a u32 id byte length, the UTF-8 id, a u32 row count, and
the rows as float32 row-major. Samples are written in sorted id order so
identical inputs produce identical bytes.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"NFEMB1"


def write_embedding_file(path: str, matrices: dict[str, np.ndarray]) -> None:
    if not matrices:
        raise ValueError("refusing to write an embedding file with no samples")
    dims = {m.shape[1] for m in matrices.values()}
    if len(dims) != 1:
        raise ValueError(f"inconsistent dimensions across samples: {sorted(dims)}")
    for sample_id, mat in matrices.items():
        if mat.ndim != 2 or mat.shape[0] < 2:
            raise ValueError(f"sample {sample_id!r}: matrix must be 2-d with >= 2 rows")
        if not np.all(np.isfinite(mat)):
            raise ValueError(f"sample {sample_id!r}: matrix contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", dims.pop()))
        for sample_id in sorted(matrices):
            raw = sample_id.encode("utf-8")
            mat = matrices[sample_id]
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", mat.shape[0]))
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())

"""CSV tables and the run-length-encoded snapshot sidecar."""

from __future__ import annotations

import csv
import hashlib
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

RLE_MAGIC = b"CHRL"
RLE_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_RECORD = struct.Struct("<dI")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def trajectory_rows(replica: int, times, values: np.ndarray, labels: Sequence[str]):
    """Long-format rows ``(replica, t, observable_id, value)``."""
    for i, t in enumerate(times):
        for j, lab in enumerate(labels):
            yield (replica, float(t), lab, float(values[i, j]))


def write_trajectory_csv(path, rows) -> Path:
    return write_csv(path, ("replica", "t", "observable_id", "value"), rows)


def write_error_table(path, rows: Sequence[dict], experiment: str, lattice: str, N: int) -> Path:
    """Hydrodynamic error rows with experiment-hash columns for joins."""
    header = ("experiment", "lattice", "N", "t", "J", "pde", "mean_pairing", "stderr", "mean_error",
              "error_of_mean", "replica_errors")
    out = []
    for r in rows:
        errs = ";".join(repr(float(e)) for e in r["errors"])
        out.append((experiment, lattice, N, r["t"], r["J"], r["pde"], r["mean_pairing"], r["stderr"],
                    r["mean_error"], r["error_of_mean"], errs))
    return write_csv(path, header, out)


# ---------------------------------------------------------------------------
# run-length-encoded occupancy snapshots
# ---------------------------------------------------------------------------


def _runs(occ: np.ndarray) -> np.ndarray:
    # run lengths, first run counts zeros (possibly length 0)
    occ = np.asarray(occ, dtype=np.uint8)
    if occ.size == 0:
        return np.zeros(0, dtype=np.uint32)
    edges = np.flatnonzero(np.diff(occ)) + 1
    bounds = np.concatenate(([0], edges, [occ.size]))
    lengths = np.diff(bounds)
    if occ[0] == 1:
        lengths = np.concatenate(([0], lengths))
    return lengths.astype(np.uint32)


def write_rle(path: str | Path, times, snapshots: np.ndarray, N: int, n0: int) -> Path:
    """Write snapshots as ``header`` + per snapshot ``(t, nruns, runs...)``.

    The header is 16 bytes: magic, format version, ``N`` and ``|V0|``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(RLE_MAGIC, RLE_VERSION, int(N), int(n0)))
        for t, occ in zip(times, snapshots):
            runs = _runs(occ)
            fh.write(_RECORD.pack(float(t), len(runs)))
            fh.write(runs.astype("<u4").tobytes())
    return path


def read_rle(path: str | Path) -> tuple[dict, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_rle`: ``(header, times, snapshots)``."""
    data = Path(path).read_bytes()
    magic, version, N, n0 = _HEADER.unpack_from(data, 0)
    if magic != RLE_MAGIC:
        raise ValueError(f"not an occupancy sidecar (magic {magic!r})")
    if version != RLE_VERSION:
        raise ValueError(f"unsupported sidecar version {version}")
    pos = _HEADER.size
    times, snaps = [], []
    while pos < len(data):
        t, nruns = _RECORD.unpack_from(data, pos)
        pos += _RECORD.size
        runs = np.frombuffer(data, dtype="<u4", count=nruns, offset=pos)
        pos += 4 * nruns
        vals = np.arange(nruns, dtype=np.uint8) % 2
        times.append(t)
        snaps.append(np.repeat(vals, runs.astype(np.int64)))
    header = {"N": N, "num_vertices": n0, "version": version}
    arr = np.array(snaps, dtype=np.uint8) if snaps else np.zeros((0, 0), dtype=np.uint8)
    return header, np.array(times), arr

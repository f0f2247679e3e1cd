"""Field rendering to 8-bit PGM heatmaps and CSV grids."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DomainError


def to_gray(values: np.ndarray) -> tuple[np.ndarray, float, float, bool]:
    """Map [min, max] linearly onto 0..255 (floor). Constant fields map to 0."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if not hi > lo:
        return np.zeros(v.shape, dtype=np.uint8), lo, hi, True
    scaled = np.floor(255.0 * (v - lo) / (hi - lo))
    return np.clip(scaled, 0, 255).astype(np.uint8), lo, hi, False


def pgm_bytes(values: np.ndarray) -> bytes:
    """Binary P5 image; grid rows become image rows."""
    pix, lo, hi, degenerate = to_gray(values)
    rows, cols = pix.shape
    comment = "# degenerate-range" if degenerate else f"# min={lo!r} max={hi!r}"
    if degenerate:
        comment += f" value={lo!r}"
    header = f"P5\n{comment}\n{cols} {rows}\n255\n".encode("ascii")
    return header + pix.tobytes()


def write_pgm(path, values: np.ndarray) -> None:
    Path(path).write_bytes(pgm_bytes(values))


def read_pgm(path) -> tuple[np.ndarray, list[str]]:
    data = Path(path).read_bytes()
    tokens, comments, pos = [], [], 0
    while len(tokens) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end].decode("ascii")
        pos = end + 1
        if line.startswith("#"):
            comments.append(line)
        else:
            tokens += line.split()
    if tokens[0] != "P5":
        raise DomainError("not a binary PGM")
    cols, rows = int(tokens[1]), int(tokens[2])
    pix = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=pos).reshape(rows, cols)
    return pix, comments


def csv_text(values: np.ndarray) -> str:
    return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in np.asarray(values))


def write_csv(path, values: np.ndarray) -> None:
    Path(path).write_text(csv_text(values))


def read_csv(path) -> np.ndarray:
    rows = [line.split(",") for line in Path(path).read_text().splitlines() if line]
    return np.array([[float(x) for x in r] for r in rows])


def render(values: np.ndarray, path, fmt: str = "pgm", negate: bool = False) -> None:
    v = -np.asarray(values) if negate else np.asarray(values)
    if not np.all(np.isfinite(v)):
        raise DomainError("cannot render non-finite values")
    if fmt == "pgm":
        write_pgm(path, v)
    elif fmt == "csv":
        write_csv(path, v)
    else:
        raise DomainError(f"unknown render format {fmt!r}")


def frame_of(stack: np.ndarray, k: int) -> np.ndarray:
    n = len(stack)
    if not 0 <= k < n:
        raise DomainError(f"frame {k} out of range (0..{n - 1})")
    return stack[k]

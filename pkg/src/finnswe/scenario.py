"""Initial conditions, dataset generation and on-disk formats.

Binary layouts are little-endian with no padding.

Sequence file (``SWE1``)::

    magic  b"SWE1"
    u32    version word (1; bit 31 set => field-only file, see below)
    u32    nx, ny, T
    f64    dx_m, dt_s, g
    f64    x0_m, y0_m, sigma_m
    f64    phi_rad, beta
    f64    H            nx*ny, row-major
    f64    eta frames   (T+1)*nx*ny
    f64    u frames     (T+1)*nx*ny
    f64    v frames     (T+1)*nx*ny

A field-only file (used for inferred topographies) sets bit 31 of the
version word, stores T = 0 and ends after H.

Checkpoint file (``FNN1``)::

    magic  b"FNN1"
    u32    version (1), hidden_width, param_count, has_H, nx, ny
    f64    parameters   param_count values, canonical order
    f64    H            nx*ny values when has_H == 1
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError, ShapeError, SweError
from .finn import FinnParams, count_params
from .rng import SplitMix64
from .swe import Grid, SimConfig, mass_drift, reference_rollout
from .topography import ARCTAN_AMPLITUDE_M, ARCTAN_STEEPNESS, TopoSpec, generate

SIGMA_M = 5.0e4
SEQ_MAGIC = b"SWE1"
CKPT_MAGIC = b"FNN1"
VERSION = 1
FIELD_ONLY = 1 << 31

_SEQ_HEADER = struct.Struct("<4sIIII8d")
_CKPT_HEADER = struct.Struct("<4sIIIIII")


def gaussian_ic(grid: Grid, x0_m: float, y0_m: float, sigma_m: float = SIGMA_M) -> np.ndarray:
    L = grid.side_length_m
    if not (0.0 <= x0_m <= L and 0.0 <= y0_m <= L):
        raise DomainError(f"bump centre ({x0_m}, {y0_m}) lies outside the {L:g} m domain")
    if not sigma_m > 0:
        raise DomainError("sigma_m must be positive")
    X, Y = grid.cell_centers()
    return np.exp(-((X - x0_m) ** 2 / (2 * sigma_m**2) + (Y - y0_m) ** 2 / (2 * sigma_m**2)))


@dataclass
class Sequence:
    H: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    cfg: SimConfig
    ic: tuple[float, float, float]
    phi: float = 0.0
    beta: float = 1.0

    @property
    def steps(self) -> int:
        return len(self.eta) - 1


def _config_from_header(nx, ny, T, dx, dt, g) -> SimConfig:
    return SimConfig(grid=Grid(nx, ny, dx * nx), g_m_s2=g, dt_s=dt, steps=max(T, 1))


def write_sequence(path, seq: Sequence) -> None:
    T = seq.steps
    nx, ny = seq.H.shape
    for name in ("eta", "u", "v"):
        if getattr(seq, name).shape != (T + 1, nx, ny):
            raise ShapeError(f"{name} frames have shape {getattr(seq, name).shape}, expected {(T + 1, nx, ny)}")
    header = _SEQ_HEADER.pack(
        SEQ_MAGIC, VERSION, nx, ny, T,
        seq.cfg.dx_m, seq.cfg.dt_s, seq.cfg.g_m_s2,
        *seq.ic, seq.phi, seq.beta,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (seq.H, seq.eta, seq.u, seq.v):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def write_field(path, H: np.ndarray, dx_m: float, g: float = 9.81) -> None:
    """Single-field container (for inferred topographies)."""
    nx, ny = H.shape
    header = _SEQ_HEADER.pack(SEQ_MAGIC, VERSION | FIELD_ONLY, nx, ny, 0, dx_m, 0.0, g, 0, 0, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(H, dtype="<f8").tobytes())


def _parse_seq_header(buf: bytes, path):
    if len(buf) < 4 or buf[:4] != SEQ_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r} at byte 0, expected {SEQ_MAGIC!r}")
    if len(buf) < _SEQ_HEADER.size:
        raise FormatError(
            f"{path}: truncated header, expected {_SEQ_HEADER.size} bytes, got {len(buf)} (offset {len(buf)})"
        )
    magic, version, nx, ny, T, *floats = _SEQ_HEADER.unpack_from(buf, 0)
    if version & ~FIELD_ONLY != VERSION:
        raise FormatError(f"{path}: version {version & ~FIELD_ONLY} at byte 4 is not supported (expected {VERSION})")
    return bool(version & FIELD_ONLY), nx, ny, T, floats


def _payload(buf, offset, count, path, what):
    need = offset + 8 * count
    if len(buf) < need:
        raise FormatError(
            f"{path}: truncated while reading {what} at byte offset {offset}: "
            f"expected {need} bytes in total, got {len(buf)}"
        )
    return np.frombuffer(buf, dtype="<f8", count=count, offset=offset).astype(np.float64), need


def read_sequence(path, check_mass: float | None = None) -> Sequence:
    """Read a ``SWE1`` sequence file.

    With ``check_mass`` the stored surface frames are re-checked for mass
    conservation at that relative tolerance.
    """
    buf = Path(path).read_bytes()
    field_only, nx, ny, T, floats = _parse_seq_header(buf, path)
    if field_only:
        raise FormatError(f"{path}: field-only file, use read_field")
    dx, dt, g, x0, y0, sigma, phi, beta = floats
    off = _SEQ_HEADER.size
    n = nx * ny
    H, off = _payload(buf, off, n, path, "H")
    frames = {}
    for name in ("eta", "u", "v"):
        arr, off = _payload(buf, off, (T + 1) * n, path, name)
        frames[name] = arr.reshape(T + 1, nx, ny)
    if len(buf) != off:
        raise FormatError(f"{path}: {len(buf) - off} trailing bytes after offset {off}")
    seq = Sequence(
        H=H.reshape(nx, ny), eta=frames["eta"], u=frames["u"], v=frames["v"],
        cfg=_config_from_header(nx, ny, T, dx, dt, g), ic=(x0, y0, sigma), phi=phi, beta=beta,
    )
    if check_mass is not None:
        drift = mass_drift(seq.eta)
        if drift > check_mass:
            raise SweError(f"{path}: relative mass drift {drift:.3e} exceeds {check_mass:g}")
    return seq


def read_field(path) -> tuple[np.ndarray, float]:
    """Read a field-only container; returns (H, dx_m)."""
    buf = Path(path).read_bytes()
    field_only, nx, ny, T, floats = _parse_seq_header(buf, path)
    if not field_only:
        seq = read_sequence(path)
        return seq.H, seq.cfg.dx_m
    H, off = _payload(buf, _SEQ_HEADER.size, nx * ny, path, "H")
    if len(buf) != off:
        raise FormatError(f"{path}: {len(buf) - off} trailing bytes after offset {off}")
    return H.reshape(nx, ny), floats[0]


def write_checkpoint(path, params: FinnParams, H: np.ndarray | None = None) -> None:
    nx, ny = (0, 0) if H is None else H.shape
    header = _CKPT_HEADER.pack(CKPT_MAGIC, VERSION, params.hidden_width, params.count, int(H is not None), nx, ny)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(params.flat().astype("<f8").tobytes())
        if H is not None:
            fh.write(np.ascontiguousarray(H, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_checkpoint(
    path, hidden_width: int | None = None, grid_shape: tuple[int, int] | None = None
) -> tuple[FinnParams, np.ndarray | None]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    buf = p.read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r} at byte 0, expected {CKPT_MAGIC!r}")
    if len(buf) < _CKPT_HEADER.size:
        raise FormatError(f"{path}: truncated header, expected {_CKPT_HEADER.size} bytes, got {len(buf)}")
    _, version, hidden, count, has_H, nx, ny = _CKPT_HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise FormatError(f"{path}: version {version} at byte 4 is not supported (expected {VERSION})")
    if count != count_params(hidden):
        raise FormatError(f"{path}: parameter count {count} inconsistent with hidden width {hidden}")
    if hidden_width is not None and hidden != hidden_width:
        raise FormatError(
            f"{path}: parameter count mismatch: file has {count} (hidden {hidden}), "
            f"architecture expects {count_params(hidden_width)} (hidden {hidden_width})"
        )
    off = _CKPT_HEADER.size
    flat, off = _payload(buf, off, count, path, "parameters")
    H = None
    if has_H:
        if grid_shape is not None and (nx, ny) != tuple(grid_shape):
            raise ShapeError(f"{path}: stored H is {nx}x{ny}, expected {grid_shape[0]}x{grid_shape[1]}")
        H, off = _payload(buf, off, nx * ny, path, "H")
        H = H.reshape(nx, ny)
    if len(buf) != off:
        raise FormatError(f"{path}: {len(buf) - off} trailing bytes after offset {off}")
    return FinnParams.from_flat(hidden, flat), H


# ---------------------------------------------------------------- datasets

ROLES = ("train", "infer", "test")


@dataclass
class SequenceEntry:
    file: str
    topo: TopoSpec
    x0_m: float
    y0_m: float


@dataclass
class DatasetManifest:
    role: str
    count: int
    seed: int
    cfg: SimConfig
    sigma_m: float = SIGMA_M
    entries: list[SequenceEntry] = field(default_factory=list)
    root: Path | None = None

    def path(self, i: int) -> Path:
        return (self.root or Path(".")) / self.entries[i].file

    def load(self, i: int) -> Sequence:
        return read_sequence(self.path(i))

    def __len__(self) -> int:
        return len(self.entries)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_manifest(path, m: DatasetManifest) -> None:
    c = m.cfg
    lines = [
        f"role = {m.role}",
        f"count = {m.count}",
        f"seed = {m.seed}",
        f"nx = {c.grid.nx}",
        f"ny = {c.grid.ny}",
        f"side_length_m = {_fmt(c.grid.side_length_m)}",
        f"g_m_s2 = {_fmt(c.g_m_s2)}",
        f"cfl = {_fmt(c.cfl)}",
        f"depth_ref_m = {_fmt(c.depth_ref_m)}",
        f"dt_s = {_fmt(c.dt_s)}",
        f"steps = {c.steps}",
        f"sigma_m = {_fmt(m.sigma_m)}",
    ]
    for i, e in enumerate(m.entries):
        t = e.topo
        lines += [
            "",
            f"sequence = {i}",
            f"file = {e.file}",
            f"topo.kind = {t.kind}",
            f"topo.rotation_rad = {_fmt(t.rotation_rad)}",
            f"topo.depth_scale = {_fmt(t.depth_scale)}",
            f"topo.seed = {t.seed}",
            f"topo.amplitude_m = {_fmt(t.amplitude_m)}",
            f"topo.steepness = {_fmt(t.steepness)}",
            f"ic.x0_m = {_fmt(e.x0_m)}",
            f"ic.y0_m = {_fmt(e.y0_m)}",
        ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.txt"
    head: dict[str, str] = {}
    blocks: list[dict[str, str]] = []
    current = head
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "sequence":
            current = {}
            blocks.append(current)
            continue
        current[key] = value
    try:
        cfg = SimConfig(
            grid=Grid(int(head["nx"]), int(head["ny"]), float(head["side_length_m"])),
            g_m_s2=float(head["g_m_s2"]), cfl=float(head["cfl"]), depth_ref_m=float(head["depth_ref_m"]),
            dt_s=float(head["dt_s"]), steps=int(head["steps"]),
        )
        entries = [
            SequenceEntry(
                file=b["file"],
                topo=TopoSpec(
                    kind=b["topo.kind"], rotation_rad=float(b["topo.rotation_rad"]),
                    depth_scale=float(b["topo.depth_scale"]), seed=int(b["topo.seed"]),
                    amplitude_m=float(b["topo.amplitude_m"]), steepness=float(b["topo.steepness"]),
                ),
                x0_m=float(b["ic.x0_m"]), y0_m=float(b["ic.y0_m"]),
            )
            for b in blocks
        ]
        m = DatasetManifest(
            role=head["role"], count=int(head["count"]), seed=int(head["seed"]), cfg=cfg,
            sigma_m=float(head["sigma_m"]), entries=entries, root=path.parent,
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing key {exc.args[0]}") from None
    if m.count != len(entries):
        raise FormatError(f"{path}: count = {m.count} but {len(entries)} sequence blocks")
    return m


def shared_topo(master_seed: int, beta: float | None = None, topo_seed: int | None = None) -> TopoSpec:
    """The single bumpy topography shared by the infer and test roles of a seed."""
    rng = SplitMix64(master_seed, "shared-topo")
    drawn_beta = rng.uniform(0.5, 1.0)
    drawn_seed = rng.next_u64() & 0xFFFFFFFF
    return TopoSpec(
        kind="bumpy", rotation_rad=0.0,
        depth_scale=drawn_beta if beta is None else beta,
        seed=drawn_seed if topo_seed is None else topo_seed,
    )


def _random_center(rng: SplitMix64, grid: Grid) -> tuple[float, float]:
    # cell centres away from the no-slip ring
    i = rng.integers(1, grid.nx - 1)
    j = rng.integers(1, grid.ny - 1)
    return (i + 0.5) * grid.dx_m, (j + 0.5) * grid.dy_m


def plan_dataset(
    role: str, count: int, master_seed: int, cfg: SimConfig,
    beta: float | None = None, topo_seed: int | None = None,
    amplitude_m: float = ARCTAN_AMPLITUDE_M, steepness: float = ARCTAN_STEEPNESS,
) -> list[SequenceEntry]:
    if role not in ROLES:
        raise DomainError(f"role must be one of {ROLES}, got {role!r}")
    if count < 1:
        raise DomainError("count must be >= 1")
    entries = []
    shared = None if role == "train" else shared_topo(master_seed, beta, topo_seed)
    for i in range(count):
        rng = SplitMix64(master_seed, role, i)
        if role == "train":
            topo = TopoSpec(
                kind="arctan_slope",
                rotation_rad=rng.uniform(0.0, 2.0 * math.pi),
                depth_scale=rng.uniform(0.5, 1.0) if beta is None else beta,
                amplitude_m=amplitude_m, steepness=steepness,
            )
        else:
            topo = shared
        x0, y0 = _random_center(rng, cfg.grid)
        entries.append(SequenceEntry(file=f"seq_{i:05d}.swe", topo=topo, x0_m=x0, y0_m=y0))
    return entries


def simulate_entry(entry: SequenceEntry, cfg: SimConfig, sigma_m: float = SIGMA_M) -> Sequence:
    H = generate(cfg.grid, entry.topo)
    eta0 = gaussian_ic(cfg.grid, entry.x0_m, entry.y0_m, sigma_m)
    eta, u, v = reference_rollout(eta0, H, cfg)
    return Sequence(H, eta, u, v, cfg, (entry.x0_m, entry.y0_m, sigma_m), entry.topo.rotation_rad, entry.topo.depth_scale)


def generate_dataset(
    out_dir, role: str, count: int, master_seed: int, cfg: SimConfig,
    sigma_m: float = SIGMA_M, beta: float | None = None, topo_seed: int | None = None,
    amplitude_m: float = ARCTAN_AMPLITUDE_M, steepness: float = ARCTAN_STEEPNESS,
) -> DatasetManifest:
    """Simulate ``count`` sequences into ``out_dir`` and write ``manifest.txt`` last."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = plan_dataset(role, count, master_seed, cfg, beta, topo_seed, amplitude_m, steepness)
    for i, entry in enumerate(entries):
        try:
            seq = simulate_entry(entry, cfg, sigma_m)
        except SweError as exc:
            raise type(exc)(f"sequence {i}: {exc}") from exc
        write_sequence(out / entry.file, seq)
    m = DatasetManifest(role, count, master_seed, cfg, sigma_m, entries, out)
    write_manifest(out / "manifest.txt", m)
    return m

"""On-disk formats: volumes, kernel caches, manifests, configs, images.

The volume container is a little-endian binary layout:

    magic   4 bytes  "MSHV"
    version u32      1
    dtype   u32      1=float32 2=float64 3=complex64 4=complex128
    ndim    u32
    dims    ndim*u64 row-major order, axially-first for volumes (z, y, x)
    meta    8*f64    dx dy dz_voxel slice_spacing z0 lambda_vacuum n_medium na
    payload raw row-major little-endian samples

The same layout stores precomputed propagation kernels (both transfer
stacks concatenated along the first axis). Manifests are JSON with sha256
digests and byte counts per file, no timestamps, so a seeded run writes
byte-identical trees. Config files are strict: unknown keys fail with the
full dotted path rather than being ignored.
"""

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .grid import PhysicalGrid, make_grid
from .propagation import PropagationKernels

MAGIC = b"MSHV"
VERSION = 1

_DTYPE_CODES = {
    np.dtype(np.float32): 1,
    np.dtype(np.float64): 2,
    np.dtype(np.complex64): 3,
    np.dtype(np.complex128): 4,
}
_CODE_DTYPES = {code: dt for dt, code in _DTYPE_CODES.items()}
_META_FIELDS = ("dx", "dy", "dz_voxel", "slice_spacing", "z0",
                "lambda_vacuum", "n_medium", "na")


def _meta_tuple(grid: PhysicalGrid) -> tuple:
    return tuple(float(getattr(grid, name)) for name in _META_FIELDS)


def write_volume(path, array: np.ndarray, grid: PhysicalGrid) -> None:
    """Serialize an array with the grid's physical metadata."""
    array = np.ascontiguousarray(array)
    if array.dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported dtype {array.dtype}; "
                         f"use one of {sorted(str(d) for d in _DTYPE_CODES)}")
    header = MAGIC
    header += struct.pack("<II", VERSION, _DTYPE_CODES[array.dtype])
    header += struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    header += struct.pack("<8d", *_meta_tuple(grid))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes())


def read_volume(path):
    """Read back (array, metadata dict). Inverse of :func:`write_volume`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, code = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise ValueError(f"{path}: unknown dtype code {code}")
    (ndim,) = struct.unpack_from("<I", blob, 12)
    dims = struct.unpack_from(f"<{ndim}Q", blob, 16)
    off = 16 + 8 * ndim
    meta = dict(zip(_META_FIELDS, struct.unpack_from("<8d", blob, off)))
    off += 64
    dtype = _CODE_DTYPES[code].newbyteorder("<")
    n = int(np.prod(dims)) if dims else 1
    expected = off + n * dtype.itemsize
    if len(blob) != expected:
        raise ValueError(f"{path}: payload length {len(blob) - off} != "
                         f"{n * dtype.itemsize} for dims {dims}")
    array = np.frombuffer(blob, dtype=dtype, count=n, offset=off).reshape(dims)
    return array.astype(_CODE_DTYPES[code]), meta


def grid_from_metadata(dims, meta) -> PhysicalGrid:
    """Rebuild the grid of a stored 3D volume from its header."""
    if len(dims) != 3:
        raise ValueError(f"need 3 dims to rebuild a grid, got {dims}")
    nz, ny, nx = (int(d) for d in dims)
    return make_grid(nx=nx, ny=ny, nz=nz, **meta)


def save_kernels(path, kernels: PropagationKernels) -> None:
    """Cache both transfer stacks in the volume container.

    The stacks are concatenated along the first axis (volume offsets then
    hologram heights). The singular-sample policy is baked into the plane
    contents and not recorded separately.
    """
    stack = np.concatenate([kernels.tf_volume, kernels.tf_holo], axis=0)
    write_volume(path, stack, kernels.grid)


def load_kernels(path, grid: PhysicalGrid | None = None) -> PropagationKernels:
    """Rebuild kernels from a cache file; validates against ``grid`` if given."""
    stack, meta = read_volume(path)
    if stack.ndim != 3 or stack.shape[0] % 2:
        raise ValueError(f"{path}: not a kernel cache (shape {stack.shape})")
    nz = stack.shape[0] // 2
    pad_ny, pad_nx = stack.shape[1], stack.shape[2]
    cache_grid = make_grid(nx=pad_nx // 2, ny=pad_ny // 2, nz=nz, **meta)
    if grid is not None and cache_grid != grid:
        raise ValueError(f"{path}: cache grid {cache_grid} != requested {grid}")
    return PropagationKernels(grid=cache_grid, pad_ny=pad_ny, pad_nx=pad_nx,
                              tf_volume=np.ascontiguousarray(stack[:nz]),
                              tf_holo=np.ascontiguousarray(stack[nz:]),
                              singular_policy="cached",
                              singular_sample=complex("nan"))


# --- manifests ----------------------------------------------------------------

def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, extra: dict | None = None) -> Path:
    """Digest (relative) file paths under ``out_dir`` into manifest.json.

    Deliberately timestamp-free: the manifest of a seeded run is itself
    reproducible. ``extra`` merges caller-provided provenance (settings,
    normalization constants) under the "run" key.
    """
    out_dir = Path(out_dir)
    entries = {}
    for rel in sorted(str(f) for f in files):
        p = out_dir / rel
        entries[rel] = {"sha256": sha256_of(p), "bytes": p.stat().st_size}
    doc = {"format": "born-holo-manifest/1", "files": entries}
    if extra:
        doc["run"] = extra
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def verify_manifest(out_dir) -> list:
    """Check every manifest entry; returns a list of problem strings."""
    out_dir = Path(out_dir)
    try:
        with open(out_dir / "manifest.json", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        return ["manifest.json: missing"]
    except json.JSONDecodeError as exc:
        return [f"manifest.json: not valid JSON ({exc})"]
    problems = []
    for rel, want in doc.get("files", {}).items():
        p = out_dir / rel
        if not p.is_file():
            problems.append(f"{rel}: missing")
            continue
        if p.stat().st_size != want["bytes"]:
            problems.append(f"{rel}: size {p.stat().st_size} != {want['bytes']}")
            continue
        got = sha256_of(p)
        if got != want["sha256"]:
            problems.append(f"{rel}: sha256 {got[:12]}.. != {want['sha256'][:12]}..")
    return problems


# --- strict config loading -----------------------------------------------------

_REQUIRED = object()


@dataclass(frozen=True)
class Field:
    """Leaf of a config schema: accepted type(s), default, optional choices."""

    types: tuple
    default: object = _REQUIRED
    choices: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.types, tuple):
            object.__setattr__(self, "types", (self.types,))


def _check_leaf(value, spec: Field, path: str):
    ok_types = spec.types
    if float in ok_types and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if bool not in ok_types and isinstance(value, bool):
        raise ConfigError(f"{path}: expected {_type_names(ok_types)}, got bool")
    if not isinstance(value, ok_types):
        raise ConfigError(f"{path}: expected {_type_names(ok_types)}, "
                          f"got {type(value).__name__}")
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(f"{path}: {value!r} not one of {list(spec.choices)}")
    return value


def _type_names(types) -> str:
    return "/".join(t.__name__ for t in types)


def validate_config(data, schema: dict, path: str = "") -> dict:
    """Validate a parsed JSON object against a nested schema.

    Unknown keys are rejected with their full dotted path; missing required
    fields and type mismatches likewise. Returns a new dict with defaults
    filled in.
    """
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, "
                          f"got {type(data).__name__}")
    out = {}
    for key, value in data.items():
        child = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"{child}: unknown key")
        spec = schema[key]
        if isinstance(spec, dict):
            out[key] = validate_config(value, spec, child)
        else:
            out[key] = _check_leaf(value, spec, child)
    for key, spec in schema.items():
        if key in out:
            continue
        child = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            out[key] = validate_config({}, spec, child)
        elif spec.default is _REQUIRED:
            raise ConfigError(f"{child}: required key missing")
        else:
            out[key] = spec.default
    return out


def load_config(path, schema: dict) -> dict:
    """Read a UTF-8 JSON config file and validate it strictly."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None
    return validate_config(data, schema)


# --- image export ---------------------------------------------------------------

def export_png(path, array: np.ndarray, vmin: float | None = None,
               vmax: float | None = None) -> dict:
    """Write a 2D array as an 8-bit grayscale PNG.

    Returns the normalization actually applied (for the run manifest), so
    pixel values can be mapped back to physical numbers.
    """
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 2:
        raise ValueError(f"PNG export needs a 2D array, got shape {array.shape}")
    lo = float(array.min()) if vmin is None else float(vmin)
    hi = float(array.max()) if vmax is None else float(vmax)
    if hi <= lo:
        scaled = np.zeros(array.shape, dtype=np.uint8)
    else:
        scaled = np.clip((array - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
    Image.fromarray(scaled, mode="L").save(path, format="PNG")
    return {"vmin": lo, "vmax": hi, "bits": 8}


# --- cost history ----------------------------------------------------------------

_COST_HEADER = ("iteration", "data_term", "tv_term", "total", "alpha")


def write_cost_history(path, history: np.ndarray) -> None:
    """Solver cost rows as TSV: iteration, data, tv, total, step size."""
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 2 or history.shape[1] != 4:
        raise ValueError(f"expected (n, 4) history, got {history.shape}")
    with open(path, "w", newline="") as fh:
        fh.write("\t".join(_COST_HEADER) + "\n")
        for i, row in enumerate(history):
            fh.write("\t".join([str(i)] + [f"{v:.17g}" for v in row]) + "\n")


def read_cost_history(path) -> np.ndarray:
    """Read back the (n, 4) cost table written by :func:`write_cost_history`."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(lines[0].split("\t")) != _COST_HEADER:
        raise ValueError(f"{path}: missing cost-history header")
    rows = [[float(v) for v in ln.split("\t")[1:]] for ln in lines[1:] if ln]
    return np.array(rows, dtype=np.float64).reshape(-1, 4)

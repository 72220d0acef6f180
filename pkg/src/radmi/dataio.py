"""Tensor file interchange and dataset directory layout.

The on-disk format is .npy v1.0 restricted to little-endian float32/int32 in
C order. The writer is byte-compatible with numpy's own: the ASCII header is
padded with spaces so that magic + version + length field + header is a
multiple of 64 bytes and ends in a newline. The reader is deliberately
strict and rejects anything outside that subset.

Dataset layout::

    dataset/sections/<id>/decoder_L1.npy ... decoder_L<L>.npy
                          probs.npy            (optional, K x H x W float32)
                          ensemble_probs.npy   (optional, M x K x H x W float32)
                          dropout_probs.npy    (optional, T x K x H x W float32)
                          epoch_preds.npy      (optional, E x H x W int32)
                          labels.npy           (optional, H x W int32)
"""

from __future__ import annotations

import ast
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import FormatError

MAGIC = b"\x93NUMPY"
HEADER_ALIGN = 64
SUPPORTED_DESCRS = {"<f4": np.dtype("<f4"), "<i4": np.dtype("<i4")}

_DECODER_RE = re.compile(r"^decoder_L(\d+)\.npy$")


def read_tensor(path) -> np.ndarray:
    """Read one .npy v1.0 file into a C-order float32 or int32 array.

    Raises OSError if the file cannot be opened and FormatError for any
    deviation from the supported format subset (bad magic, version other
    than 1.0, dtype outside {'<f4', '<i4'}, Fortran order, malformed or
    truncated header or payload).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    return _decode(blob, name=str(path))


def _decode(blob: bytes, name: str = "<bytes>") -> np.ndarray:
    if len(blob) < 10:
        raise FormatError(f"{name}: file too short for a .npy header")
    if blob[:6] != MAGIC:
        raise FormatError(f"{name}: bad magic bytes {blob[:6]!r}")
    major, minor = blob[6], blob[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"{name}: unsupported .npy version {major}.{minor}")
    (hlen,) = struct.unpack("<H", blob[8:10])
    header_end = 10 + hlen
    if len(blob) < header_end:
        raise FormatError(f"{name}: truncated header (declared {hlen} bytes)")
    raw = blob[10:header_end]
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{name}: non-ASCII header") from exc
    if not text.endswith("\n"):
        raise FormatError(f"{name}: header does not end in newline")

    try:
        header = ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{name}: unparseable header {text!r}") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"{name}: header must have exactly descr/fortran_order/shape")

    descr = header["descr"]
    if descr not in SUPPORTED_DESCRS:
        raise FormatError(f"{name}: unsupported dtype descr {descr!r}")
    if header["fortran_order"] is not False:
        raise FormatError(f"{name}: only C-order files are supported")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not shape:
        raise FormatError(f"{name}: shape must be a nonempty tuple, got {shape!r}")
    for dim in shape:
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            raise FormatError(f"{name}: shape entries must be positive ints, got {shape!r}")

    dtype = SUPPORTED_DESCRS[descr]
    count = int(np.prod(shape, dtype=np.int64))
    expected = count * dtype.itemsize
    payload = blob[header_end:]
    if len(payload) != expected:
        raise FormatError(
            f"{name}: payload is {len(payload)} bytes, expected {expected} for shape {shape}"
        )
    arr = np.frombuffer(payload, dtype=dtype, count=count).reshape(shape)
    # copy: frombuffer views are read-only and keep the whole blob alive
    return arr.copy()


def write_tensor(t: np.ndarray, path) -> None:
    """Write a float32/int32 array as .npy v1.0, byte-compatible with numpy.

    Raises OSError when the destination cannot be written (e.g. missing
    parent directory) and FormatError for unsupported dtypes or empty arrays.
    """
    blob = _encode(np.asarray(t))
    with open(path, "wb") as fh:
        fh.write(blob)


def _encode(arr: np.ndarray) -> bytes:
    if arr.dtype == np.float32:
        descr = "<f4"
    elif arr.dtype == np.int32:
        descr = "<i4"
    else:
        raise FormatError(f"unsupported tensor dtype {arr.dtype}; use float32 or int32")
    if arr.size == 0:
        raise FormatError("refusing to write an empty tensor")
    shape = tuple(int(d) for d in arr.shape)
    header = "{" + ", ".join(
        f"'{k}': {v}" for k, v in
        [("descr", f"'{descr}'"), ("fortran_order", "False"), ("shape", repr(shape))]
    ) + ", }"
    # pad so magic(6) + version(2) + len(2) + header is a multiple of 64
    unpadded = len(MAGIC) + 2 + 2 + len(header) + 1
    pad = (-unpadded) % HEADER_ALIGN
    header = header + " " * pad + "\n"
    out = bytearray()
    out += MAGIC
    out += bytes((1, 0))
    out += struct.pack("<H", len(header))
    out += header.encode("ascii")
    out += arr.astype(descr, copy=False).tobytes("C")
    return bytes(out)


@dataclass
class SectionDataset:
    """All dumped outputs for one 2-D section.

    decoder_features is ordered coarse to fine; optional network outputs all
    share the final output resolution.
    """

    section_id: str
    decoder_features: list = field(default_factory=list)
    probs: np.ndarray | None = None
    ensemble_probs: np.ndarray | None = None
    dropout_probs: np.ndarray | None = None
    epoch_preds: np.ndarray | None = None
    labels: np.ndarray | None = None

    def output_hw(self) -> tuple[int, int]:
        """Resolution of the network output: probs if present, else the
        finest decoder layer."""
        if self.probs is not None:
            return self.probs.shape[-2], self.probs.shape[-1]
        finest = self.decoder_features[-1]
        return finest.shape[-2], finest.shape[-1]

    def validate(self) -> None:
        if len(self.decoder_features) < 2:
            raise FormatError(
                f"section {self.section_id}: need at least 2 decoder layers, "
                f"got {len(self.decoder_features)}"
            )
        for i, feat in enumerate(self.decoder_features, start=1):
            if feat.ndim != 3:
                raise FormatError(
                    f"section {self.section_id}: decoder_L{i} must be C x H x W, "
                    f"got shape {feat.shape}"
                )
            if feat.dtype != np.float32:
                raise FormatError(f"section {self.section_id}: decoder_L{i} must be float32")
        for prev, nxt in zip(self.decoder_features, self.decoder_features[1:]):
            if nxt.shape[1] < prev.shape[1] or nxt.shape[2] < prev.shape[2]:
                raise FormatError(
                    f"section {self.section_id}: decoder resolutions must be "
                    f"non-decreasing, got {prev.shape[1:]} then {nxt.shape[1:]}"
                )
        out_hw = None
        checks = [
            ("probs", self.probs, 3, np.float32),
            ("ensemble_probs", self.ensemble_probs, 4, np.float32),
            ("dropout_probs", self.dropout_probs, 4, np.float32),
            ("epoch_preds", self.epoch_preds, 3, np.int32),
            ("labels", self.labels, 2, np.int32),
        ]
        for name, arr, rank, dtype in checks:
            if arr is None:
                continue
            if arr.ndim != rank:
                raise FormatError(
                    f"section {self.section_id}: {name} must have rank {rank}, "
                    f"got shape {arr.shape}"
                )
            if arr.dtype != dtype:
                raise FormatError(f"section {self.section_id}: {name} must be {dtype}")
            hw = (arr.shape[-2], arr.shape[-1])
            if out_hw is None:
                out_hw = hw
            elif hw != out_hw:
                raise FormatError(
                    f"section {self.section_id}: {name} resolution {hw} differs "
                    f"from other outputs at {out_hw}"
                )
        if out_hw is not None:
            finest = self.decoder_features[-1]
            if out_hw[0] < finest.shape[1] or out_hw[1] < finest.shape[2]:
                raise FormatError(
                    f"section {self.section_id}: output resolution {out_hw} is below "
                    f"the finest decoder layer {finest.shape[1:]}"
                )


OPTIONAL_FILES = ("probs", "ensemble_probs", "dropout_probs", "epoch_preds", "labels")


def load_section(section_dir) -> SectionDataset:
    """Load one section directory into a validated SectionDataset."""
    section_dir = Path(section_dir)
    if not section_dir.is_dir():
        raise FileNotFoundError(f"section directory not found: {section_dir}")
    layers = {}
    for entry in section_dir.iterdir():
        m = _DECODER_RE.match(entry.name)
        if m:
            layers[int(m.group(1))] = entry
    if len(layers) < 2:
        raise FormatError(f"section {section_dir.name}: need at least 2 decoder files")
    indices = sorted(layers)
    if indices != list(range(1, len(indices) + 1)):
        raise FormatError(
            f"section {section_dir.name}: decoder files must be numbered "
            f"L1..L{len(indices)} without gaps, found {indices}"
        )
    ds = SectionDataset(
        section_id=section_dir.name,
        decoder_features=[read_tensor(layers[i]) for i in indices],
    )
    for name in OPTIONAL_FILES:
        path = section_dir / f"{name}.npy"
        if path.exists():
            setattr(ds, name, read_tensor(path))
    ds.validate()
    return ds


def save_section(ds: SectionDataset, dataset_root) -> Path:
    """Write a SectionDataset under <root>/sections/<id>/ and return the dir."""
    ds.validate()
    out = Path(dataset_root) / "sections" / ds.section_id
    out.mkdir(parents=True, exist_ok=True)
    for i, feat in enumerate(ds.decoder_features, start=1):
        write_tensor(feat, out / f"decoder_L{i}.npy")
    for name in OPTIONAL_FILES:
        arr = getattr(ds, name)
        if arr is not None:
            write_tensor(arr, out / f"{name}.npy")
    return out


def list_sections(dataset_root) -> list:
    """Sorted section ids under <root>/sections/."""
    root = Path(dataset_root) / "sections"
    if not root.is_dir():
        raise FileNotFoundError(f"no sections/ directory under {dataset_root}")
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def load_dataset(dataset_root) -> list:
    """Load every section under <root>/sections/, sorted by id."""
    root = Path(dataset_root)
    return [load_section(root / "sections" / sid) for sid in list_sections(root)]

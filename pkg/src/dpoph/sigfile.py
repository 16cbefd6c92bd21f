"""Signature sets for whole datasets and their on-disk formats.

Binary layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"DPOPHSIG"
    8       2     format version (uint16, currently 1)
    10      4     header length H in bytes (uint32)
    14      H     UTF-8 JSON header
    14+H    4nK   n rows of K int32 slots, row-major; EMPTY is -1

The JSON header has keys ``scheme, kind, D, K, b, seed, n, ids`` and, for
privatized sets, ``privacy`` with ``variant, epsilon, delta, N, eps_prime,
f_min, noise_seed``. Keys are written sorted so equal sets give equal bytes.

The CSV debug form has a header line ``id,h1,...,hK`` and writes ``E`` for
EMPTY slots. It carries no metadata and is not meant to be read back.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ComparabilityError, ConfigError
from .sketch import EMPTY, Signature

MAGIC = b"DPOPHSIG"
VERSION = 1


@dataclass(frozen=True, eq=False)
class SignatureSet:
    """Signatures of a dataset: an (n, K) slot matrix plus shared metadata."""

    codes: np.ndarray
    scheme: str
    D: int
    kind: str
    b: Optional[int]
    seed: Optional[int]
    ids: tuple
    privacy: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.codes, dtype=np.int64)
        if c.ndim != 2:
            raise ValueError("codes must be a 2-d (n, K) array")
        c.setflags(write=False)
        object.__setattr__(self, "codes", c)
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if len(self.ids) != c.shape[0]:
            raise ValueError("one id per row is required")

    @property
    def K(self) -> int:
        return int(self.codes.shape[1])

    def __len__(self):
        return int(self.codes.shape[0])

    def meta(self) -> tuple:
        return (self.scheme, self.D, self.K, self.kind, self.b, self.seed)

    def check_comparable(self, other: "SignatureSet") -> None:
        if self.meta() != other.meta():
            raise ComparabilityError(
                f"signature sets are not comparable: {self.meta()} vs {other.meta()}"
            )

    @classmethod
    def from_signatures(cls, sigs, ids, privacy=None) -> "SignatureSet":
        sigs = list(sigs)
        if not sigs:
            raise ConfigError("no signatures")
        m = sigs[0].meta()
        for s in sigs[1:]:
            if s.meta() != m:
                raise ComparabilityError("mixed signature metadata in one set")
        priv = dict(privacy if privacy is not None else sigs[0].privacy)
        priv.pop("N_row", None)
        return cls(np.stack([s.slots for s in sigs]), sigs[0].scheme, sigs[0].D,
                   sigs[0].kind, sigs[0].b, sigs[0].seed, tuple(ids), priv)

    def row(self, i: int) -> Signature:
        return Signature(self.codes[i], self.scheme, self.D, self.kind, self.b, self.seed,
                         dict(self.privacy))

    def __eq__(self, other):
        if not isinstance(other, SignatureSet):
            return NotImplemented
        return (self.meta() == other.meta() and self.ids == other.ids
                and _jsonable(self.privacy) == _jsonable(other.privacy)
                and np.array_equal(self.codes, other.codes))


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and math.isinf(v):
            v = "inf"
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def _header(s: SignatureSet) -> bytes:
    h = {"scheme": s.scheme, "kind": s.kind, "D": s.D, "K": s.K, "b": s.b, "seed": s.seed,
         "n": len(s), "ids": list(s.ids)}
    if s.privacy:
        h["privacy"] = _jsonable(s.privacy)
    return json.dumps(h, sort_keys=True, separators=(",", ":")).encode()


def write_signatures(s: SignatureSet, path_or_buffer) -> None:
    """Write the binary form (see module docstring)."""
    if s.codes.size and (s.codes.min() < -(1 << 31) or s.codes.max() >= (1 << 31)):
        raise ConfigError("slot values do not fit in int32")
    hdr = _header(s)
    blob = MAGIC + struct.pack("<HI", VERSION, len(hdr)) + hdr
    blob += s.codes.astype("<i4").tobytes(order="C")
    if isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__"):
        with open(path_or_buffer, "wb") as fh:
            fh.write(blob)
    else:
        path_or_buffer.write(blob)


def read_signatures(path_or_buffer) -> SignatureSet:
    if isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__"):
        with open(path_or_buffer, "rb") as fh:
            blob = fh.read()
    else:
        blob = path_or_buffer.read()
    if blob[:8] != MAGIC:
        raise ConfigError("not a signature file (bad magic)")
    version, hlen = struct.unpack("<HI", blob[8:14])
    if version != VERSION:
        raise ConfigError(f"unsupported signature file version {version}")
    h = json.loads(blob[14:14 + hlen].decode())
    n, K = h["n"], h["K"]
    body = blob[14 + hlen:]
    if len(body) != 4 * n * K:
        raise ConfigError(f"signature file truncated: expected {4 * n * K} bytes of rows")
    codes = np.frombuffer(body, dtype="<i4").astype(np.int64).reshape(n, K)
    priv = h.get("privacy", {})
    for k, v in list(priv.items()):
        if v == "inf":
            priv[k] = math.inf
    return SignatureSet(codes, h["scheme"], h["D"], h["kind"], h["b"], h["seed"],
                        tuple(h["ids"]), priv)


def signatures_to_csv(s: SignatureSet, path_or_buffer) -> None:
    """Human-readable debug dump: one row per vector, ``E`` for EMPTY."""
    buf = io.StringIO()
    buf.write("id," + ",".join(f"h{k + 1}" for k in range(s.K)) + "\n")
    for i, row in zip(s.ids, s.codes):
        buf.write(f"{i}," + ",".join("E" if x == EMPTY else str(int(x)) for x in row) + "\n")
    text = buf.getvalue()
    if isinstance(path_or_buffer, str) or hasattr(path_or_buffer, "__fspath__"):
        with open(path_or_buffer, "w", newline="") as fh:
            fh.write(text)
    else:
        path_or_buffer.write(text)

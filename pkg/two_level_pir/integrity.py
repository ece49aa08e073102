"""
Integrity digests for answers, message stores and coefficient blocks.

SHA-256 over a canonical little-endian uint64 rendering, so digests agree
between the in-process and TCP transports and across storage dtypes.
"""

import json

import numpy as np
from cryptography.hazmat.primitives import hashes

from .algebra import Matrix


def sha256_hex(data: bytes) -> str:
    digest = hashes.Hash(hashes.SHA256())
    digest.update(data)
    return digest.finalize().hex()


def canonical_bytes(array: Matrix) -> bytes:
    """Shape header plus '<u8' payload of a residue array."""
    values = np.asarray(array)
    if values.dtype == object:
        values = values.astype(np.uint64)
    header = json.dumps(list(values.shape)).encode()
    return header + b"|" + np.ascontiguousarray(values, dtype="<u8").tobytes()


def array_digest(array: Matrix) -> str:
    return sha256_hex(canonical_bytes(array))

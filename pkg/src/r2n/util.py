"""Shared helpers: hashing, seed derivation, packed pair keys, ragged expansion."""

from __future__ import annotations

import hashlib

import numpy as np


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(1 << 20)
            if not block:
                break
            h.update(block)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def derive_seed(master: int, stage: str) -> int:
    """Stable per-stage sub-seed; adding new stages never shifts existing ones."""
    digest = hashlib.sha256(f"{master}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def pack_pairs(a, b, n: int) -> np.ndarray:
    """Encode id pairs as int64 keys a * n + b; requires 0 <= b < n."""
    return np.asarray(a, dtype=np.int64) * np.int64(n) + np.asarray(b, dtype=np.int64)


def unpack_pairs(keys, n: int):
    keys = np.asarray(keys, dtype=np.int64)
    return keys // n, keys % n


def isin_sorted(values, sorted_unique) -> np.ndarray:
    """Membership of `values` in an already sorted, unique array."""
    values = np.asarray(values)
    if sorted_unique.size == 0:
        return np.zeros(values.shape, dtype=bool)
    pos = np.searchsorted(sorted_unique, values)
    pos = np.minimum(pos, sorted_unique.size - 1)
    return sorted_unique[pos] == values


def expand_ranges(starts, stops):
    """Vectorized concatenation of arange(starts[i], stops[i]) for all i.

    Returns (rows, indices): `rows[k]` is the i that produced `indices[k]`.
    """
    starts = np.asarray(starts, dtype=np.int64)
    stops = np.asarray(stops, dtype=np.int64)
    lengths = stops - starts
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    rows = np.repeat(np.arange(starts.size, dtype=np.int64), lengths)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(
        np.cumsum(lengths) - lengths, lengths
    )
    return rows, starts[rows] + offsets

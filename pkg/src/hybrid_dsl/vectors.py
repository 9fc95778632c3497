"""Field-scoped embedding store with exact cosine top-k / threshold search."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from .corpus import FIELD_ALIASES, Corpus, EmailRecord, Granularity, resolve_field_alias
from .dsl.ast import FieldQuery
from .errors import DimensionMismatch, FieldMismatch, IndexFormatError

DEFAULT_TAU = 0.1
DEFAULT_TOP_K = 20

__all__ = [
    "FIELD_ALIASES",
    "resolve_field_alias",
    "HashingEmbedder",
    "FieldIndex",
    "CandidateBinding",
    "Hit",
    "build_index",
    "search",
    "save_indexes",
    "load_indexes",
]


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def config(self) -> dict: ...


class HashingEmbedder:
    """Signed feature hashing over character n-grams, L2-normalised.

    Text is lower-cased and split on whitespace; each word is padded with one
    space on both sides before its n-grams are taken, so grams never straddle
    two words. ``weighting`` controls how repeated grams count: ``"binary"``
    (presence), ``"log"`` (1 + ln tf) or ``"count"`` (raw tf).
    """

    def __init__(self, dimension: int = 256, n: int = 3, seed: int = 0, weighting: str = "binary"):
        if dimension < 1 or n < 1:
            raise ValueError("dimension and n must be positive")
        if weighting not in ("binary", "log", "count"):
            raise ValueError(f"unknown weighting {weighting!r}")
        self.dimension = dimension
        self.n = n
        self.seed = seed
        self.weighting = weighting
        self._key = seed.to_bytes(8, "little", signed=True)
        self._bucket = lru_cache(maxsize=1 << 18)(self._bucket_uncached)

    def config(self) -> dict:
        return {
            "kind": "hashing",
            "dimension": self.dimension,
            "n": self.n,
            "seed": self.seed,
            "weighting": self.weighting,
        }

    def _bucket_uncached(self, gram: str) -> tuple[int, float]:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        value = int.from_bytes(digest, "little")
        return (value >> 1) % self.dimension, 1.0 if value & 1 else -1.0

    def grams(self, text: str) -> Counter:
        counts: Counter = Counter()
        for word in text.lower().split():
            padded = f" {word} "
            counts.update(padded[i : i + self.n] for i in range(len(padded) - self.n + 1))
        return counts

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        # Sorted so the float accumulation order is independent of dict order.
        for gram, tf in sorted(self.grams(text).items()):
            idx, sign = self._bucket(gram)
            if self.weighting == "binary":
                w = 1.0
            elif self.weighting == "log":
                w = 1.0 + math.log(tf)
            else:
                w = float(tf)
            vec[idx] += sign * w
        norm = float(np.sqrt(np.dot(vec, vec)))
        if norm == 0.0:
            # Nothing hashed, or every gram cancelled: fall back to a fixed direction.
            idx, sign = self._bucket("\x00empty\x00")
            vec[idx] = sign
            return vec
        return vec / norm


@dataclass(frozen=True)
class Hit:
    key: str
    score: float


@dataclass(frozen=True)
class CandidateBinding:
    placeholder_index: int
    hits: tuple[Hit, ...] = ()
    field: str | None = None
    granularity: Granularity = Granularity.MESSAGE

    @property
    def keys(self) -> frozenset[str]:
        return frozenset(h.key for h in self.hits)

    def scores(self) -> dict[str, float]:
        return {h.key: h.score for h in self.hits}


@dataclass(frozen=True, eq=False)
class FieldIndex:
    field: str
    granularity: Granularity
    keys: tuple[str, ...]
    owners: tuple[tuple[str, ...], ...]  # message ids each entry came from
    vectors: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.keys)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FieldIndex):
            return NotImplemented
        return (
            self.field == other.field
            and self.granularity == other.granularity
            and self.keys == other.keys
            and self.owners == other.owners
            and self.vectors.shape == other.vectors.shape
            and bool(np.array_equal(self.vectors, other.vectors))
        )

    @cached_property
    def rows_by_owner(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for i, own in enumerate(self.owners):
            for m in own:
                out.setdefault(m, []).append(i)
        return out

    def restrict(self, message_ids: frozenset[str] | set[str]) -> FieldIndex:
        """Entries owned by at least one of ``message_ids``."""
        by_owner = self.rows_by_owner
        rows = sorted({i for m in message_ids for i in by_owner.get(m, ())})
        return FieldIndex(
            self.field,
            self.granularity,
            tuple(self.keys[i] for i in rows),
            tuple(tuple(m for m in self.owners[i] if m in message_ids) for i in rows),
            self.vectors[rows] if rows else self.vectors[:0],
        )


def field_texts(record: EmailRecord, name: str, granularity: Granularity) -> list[tuple[str, str]]:
    """(key, text) pairs to embed for ``name`` on one record."""
    if granularity is Granularity.MESSAGE:
        value = getattr(record, name)
        if isinstance(value, tuple):
            value = ", ".join(value)
        return [(record.message_id, str(value))]
    if name == "folder_labels":
        return [(f.id, f.name) for f in record.folder_labels]
    if name == "attachment_list":
        return [(a.id, f"{a.filename} {a.text}") for a in record.attachment_list]
    raise ValueError(f"no element text rule for {name!r}")


def build_index(corpus: Corpus, embedder: Embedder) -> dict[str, FieldIndex]:
    """One index per searchable field in the corpus registry.

    Element ids shared by several records (a label applied to many messages)
    are stored once; the first occurrence supplies the text.
    """
    indexes: dict[str, FieldIndex] = {}
    d = embedder.dimension
    for name, granularity in corpus.field_registry.items():
        order: list[str] = []
        owners: dict[str, list[str]] = {}
        rows: list[np.ndarray] = []
        for record in corpus.records:
            for key, text in field_texts(record, name, granularity):
                if key in owners:
                    if record.message_id not in owners[key]:
                        owners[key].append(record.message_id)
                    continue
                vec = np.asarray(embedder.embed(text), dtype=np.float64)
                if vec.shape != (d,):
                    raise DimensionMismatch(f"embedder returned shape {vec.shape}, expected ({d},)")
                order.append(key)
                owners[key] = [record.message_id]
                rows.append(vec)
        matrix = np.vstack(rows) if rows else np.zeros((0, d), dtype=np.float64)
        indexes[name] = FieldIndex(
            name, granularity, tuple(order), tuple(tuple(owners[k]) for k in order), matrix
        )
    return indexes


def restrict_indexes(indexes: Mapping[str, FieldIndex], message_ids) -> dict[str, FieldIndex]:
    ids = frozenset(message_ids)
    return {name: idx.restrict(ids) for name, idx in indexes.items()}


def cosine_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    # Row-wise multiply-and-sum instead of BLAS gemv: bitwise stable across thread counts.
    if matrix.shape[0] == 0:
        return np.zeros(0)
    return np.clip((matrix * query).sum(axis=1), -1.0, 1.0)


SCORE_DECIMALS = 12


def search(
    index: FieldIndex,
    query: FieldQuery,
    embedder: Embedder,
    top_k: int = DEFAULT_TOP_K,
    tau: float = DEFAULT_TAU,
    placeholder_index: int = 0,
) -> CandidateBinding:
    if index.field != query.field:
        raise FieldMismatch(f"index holds {index.field!r}, query targets {query.field!r}")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    q = np.asarray(embedder.embed(query.text), dtype=np.float64)
    if q.shape != (index.vectors.shape[1],):
        raise DimensionMismatch(f"query vector shape {q.shape} does not match index")
    # Rounding makes ties and the threshold independent of summation order.
    scores = np.round(cosine_scores(index.vectors, q), SCORE_DECIMALS)
    hits = [Hit(index.keys[i], float(scores[i])) for i in np.flatnonzero(scores >= tau)]
    hits.sort(key=lambda h: (-h.score, h.key))
    return CandidateBinding(placeholder_index, tuple(hits[:top_k]), index.field, index.granularity)


# persistence -----------------------------------------------------------------
#
# Layout: MAGIC, u32 header length, UTF-8 JSON header, then for each field in
# header order its (count, dimension) float64 matrix, little-endian, row-major.
# The header lists per field: name, granularity, keys, owners.

MAGIC = b"HDSLIDX\x01"


def save_indexes(indexes: Mapping[str, FieldIndex], path: str | Path, embedder_config: dict | None = None) -> None:
    dims = {idx.vectors.shape[1] for idx in indexes.values()}
    if len(dims) > 1:
        raise DimensionMismatch("indexes disagree on dimension")
    header = {
        "format": "hybrid-dsl-index",
        "version": 1,
        "dimension": dims.pop() if dims else 0,
        "embedder": embedder_config or {},
        "fields": [
            {
                "field": idx.field,
                "granularity": idx.granularity.value,
                "keys": list(idx.keys),
                "owners": [list(o) for o in idx.owners],
            }
            for idx in indexes.values()
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for idx in indexes.values():
            fh.write(np.ascontiguousarray(idx.vectors, dtype="<f8").tobytes())


def load_indexes(path: str | Path) -> tuple[dict[str, FieldIndex], dict]:
    """Returns the indexes and the embedder config recorded at build time."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise IndexFormatError("not a hybrid-dsl index file (bad magic)")
    offset = len(MAGIC)
    (hlen,) = struct.unpack_from("<I", data, offset)
    offset += 4
    header = json.loads(data[offset : offset + hlen].decode("utf-8"))
    offset += hlen
    if header.get("version") != 1:
        raise IndexFormatError(f"unsupported index version {header.get('version')!r}")
    d = header["dimension"]
    indexes: dict[str, FieldIndex] = {}
    for entry in header["fields"]:
        n = len(entry["keys"])
        nbytes = n * d * 8
        if offset + nbytes > len(data):
            raise IndexFormatError("index file truncated")
        matrix = np.frombuffer(data, dtype="<f8", count=n * d, offset=offset).reshape(n, d).astype(np.float64)
        offset += nbytes
        indexes[entry["field"]] = FieldIndex(
            entry["field"],
            Granularity(entry["granularity"]),
            tuple(entry["keys"]),
            tuple(tuple(o) for o in entry["owners"]),
            matrix,
        )
    if offset != len(data):
        raise IndexFormatError("trailing bytes after index payload")
    return indexes, header.get("embedder", {})


def embedder_from_config(cfg: dict) -> HashingEmbedder:
    if cfg.get("kind", "hashing") != "hashing":
        raise IndexFormatError(f"unknown embedder kind {cfg.get('kind')!r}")
    return HashingEmbedder(
        dimension=cfg.get("dimension", 256),
        n=cfg.get("n", 3),
        seed=cfg.get("seed", 0),
        weighting=cfg.get("weighting", "binary"),
    )

"""Sample alignment by salted-hash set intersection.

Each participant hashes ``salt || id`` with SHA-256 and only exchanges the
digests. The intersection is ordered by digest so every participant derives
the same row order without further coordination.

Digest file format: ``u32 count`` (little-endian) followed by ``count``
sorted 32-byte digests.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import DuplicateIdError, EmptyInputError, ProtocolError

DIGEST_SIZE = 32
HASH_NAME = "sha256"


@dataclass(frozen=True)
class HashedIdSet:
    owner: str
    salt: bytes
    digests: frozenset[bytes]
    # owner-private: digest -> local row index
    index: dict[bytes, int] = field(default_factory=dict, repr=False, compare=False)

    def public(self) -> "HashedIdSet":
        """The part that may be shared: digests without the local row map."""
        return HashedIdSet(self.owner, self.salt, self.digests)


@dataclass(frozen=True)
class AlignedIndex:
    owners: tuple[str, ...]
    digests: tuple[bytes, ...]
    rows: dict[str, list[int]]

    def __len__(self) -> int:
        return len(self.digests)


def _digest(salt: bytes, rid: str) -> bytes:
    return hashlib.sha256(salt + rid.encode("utf-8")).digest()


def hash_ids(ids: Sequence[str], salt: bytes | str, owner: str = "") -> HashedIdSet:
    if isinstance(salt, str):
        salt = salt.encode("utf-8")
    if len(ids) == 0:
        raise EmptyInputError("no ids to hash")
    index: dict[bytes, int] = {}
    seen: set[str] = set()
    for row, rid in enumerate(ids):
        rid = str(rid)
        if rid in seen:
            raise DuplicateIdError(f"{owner or 'participant'}: duplicate id {rid!r} at row {row}")
        seen.add(rid)
        index[_digest(salt, rid)] = row
    return HashedIdSet(owner, salt, frozenset(index), index)


def intersect(sets: Sequence[HashedIdSet]) -> AlignedIndex:
    """Common ids across participants, in ascending digest order.

    Row lists are filled for every set that carries its private index map.
    """
    if not sets:
        raise ProtocolError("intersect needs at least one participant")
    salt = sets[0].salt
    for s in sets[1:]:
        if s.salt != salt:
            raise ProtocolError(f"participant {s.owner!r} hashed with a different salt")
    common = set(sets[0].digests)
    for s in sets[1:]:
        common &= s.digests
    ordered = tuple(sorted(common))
    owners = tuple(s.owner for s in sets)
    rows = {s.owner: [s.index[d] for d in ordered] for s in sets if s.index}
    return AlignedIndex(owners, ordered, rows)


def dump_digests(hs: HashedIdSet) -> bytes:
    ordered = sorted(hs.digests)
    return struct.pack("<I", len(ordered)) + b"".join(ordered)


def load_digests(buf: bytes, owner: str, salt: bytes | str) -> HashedIdSet:
    if isinstance(salt, str):
        salt = salt.encode("utf-8")
    if len(buf) < 4:
        raise ProtocolError("digest file truncated")
    (count,) = struct.unpack_from("<I", buf, 0)
    if len(buf) != 4 + count * DIGEST_SIZE:
        raise ProtocolError(f"digest file declares {count} digests but has {len(buf) - 4} bytes")
    digests = [buf[4 + i * DIGEST_SIZE: 4 + (i + 1) * DIGEST_SIZE] for i in range(count)]
    return HashedIdSet(owner, salt, frozenset(digests))


def write_digest_file(hs: HashedIdSet, path: str | Path) -> None:
    Path(path).write_bytes(dump_digests(hs))


def read_digest_file(path: str | Path, owner: str, salt: bytes | str) -> HashedIdSet:
    return load_digests(Path(path).read_bytes(), owner, salt)

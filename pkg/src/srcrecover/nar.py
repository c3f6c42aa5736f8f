"""Normalized archive (nar) trees, serialization, and hashing.

A nar tree keeps only what matters for source identity: file names, file
contents, one executable bit, and symlink targets.  Timestamps, ownership,
and other mode bits never enter the serialization, so the SHA-256 of the
stream is a stable identifier for a checkout.
"""

from __future__ import annotations

import hashlib
import os
import stat
import struct
from dataclasses import dataclass, field

from .errors import ToolError


class NarError(ToolError):
    pass


class UnreadableEntry(NarError):
    def __init__(self, path):
        super().__init__(f"cannot read {path}")
        self.path = path


class UnsupportedNodeType(NarError):
    def __init__(self, path):
        super().__init__(f"{path} is not a regular file, directory, or symlink")
        self.path = path


@dataclass
class Regular:
    contents: bytes
    executable: bool = False


@dataclass
class Symlink:
    target: bytes


@dataclass
class Directory:
    entries: dict = field(default_factory=dict)  # name bytes -> node


NarNode = Regular | Symlink | Directory

VCS_DIRS = (b".git", b".svn", b".hg")

# Digest renderings use the base32 alphabet historically used by package
# definitions (no e/o/u/t).
_BASE32_ALPHABET = "0123456789abcdfghijklmnpqrsvwxyz"
_BASE32_INDEX = {c: i for i, c in enumerate(_BASE32_ALPHABET)}


def _wire_str(data: bytes) -> bytes:
    pad = (-len(data)) % 8
    return struct.pack("<Q", len(data)) + data + b"\0" * pad


def _serialize_node(node: NarNode, out: bytearray) -> None:
    out += _wire_str(b"(")
    out += _wire_str(b"type")
    if isinstance(node, Regular):
        out += _wire_str(b"regular")
        if node.executable:
            out += _wire_str(b"executable")
            out += _wire_str(b"")
        out += _wire_str(b"contents")
        out += _wire_str(node.contents)
    elif isinstance(node, Symlink):
        out += _wire_str(b"symlink")
        out += _wire_str(b"target")
        out += _wire_str(node.target)
    elif isinstance(node, Directory):
        out += _wire_str(b"directory")
        for name in sorted(node.entries):
            out += _wire_str(b"entry")
            out += _wire_str(b"(")
            out += _wire_str(b"name")
            out += _wire_str(name)
            out += _wire_str(b"node")
            _serialize_node(node.entries[name], out)
            out += _wire_str(b")")
    else:
        raise NarError(f"not a nar node: {type(node).__name__}")
    out += _wire_str(b")")


def nar_serialize(tree: NarNode) -> bytes:
    out = bytearray()
    out += _wire_str(b"nix-archive-1")
    _serialize_node(tree, out)
    return bytes(out)


def base32_encode(digest: bytes) -> str:
    """Render a digest in the reversed-bit base32 used by package origins."""
    length = (len(digest) * 8 - 1) // 5 + 1
    chars = []
    for n in range(length - 1, -1, -1):
        b = n * 5
        i, j = divmod(b, 8)
        c = digest[i] >> j
        if i + 1 < len(digest):
            c |= digest[i + 1] << (8 - j)
        chars.append(_BASE32_ALPHABET[c & 0x1F])
    return "".join(chars)


def base32_decode(text: str, length: int = 32) -> bytes:
    out = bytearray(length)
    for n, ch in enumerate(reversed(text)):
        try:
            digit = _BASE32_INDEX[ch]
        except KeyError:
            raise NarError(f"invalid base32 character {ch!r}") from None
        b = n * 5
        i, j = divmod(b, 8)
        out[i] |= (digit << j) & 0xFF
        if i + 1 < length:
            out[i + 1] |= digit >> (8 - j)
        elif digit >> (8 - j):
            raise NarError("base32 string has excess bits")
    return bytes(out)


class NarDigest:
    """A 32-byte SHA-256 nar digest with hex and base32 renderings."""

    __slots__ = ("bytes",)

    def __init__(self, digest: bytes):
        if len(digest) != 32:
            raise NarError("nar digests are 32-byte SHA-256 values")
        self.bytes = digest

    def __eq__(self, other):
        return isinstance(other, NarDigest) and self.bytes == other.bytes

    def __hash__(self):
        return hash(self.bytes)

    def __repr__(self):
        return f"NarDigest({self.base32})"

    @property
    def hex(self) -> str:
        return self.bytes.hex()

    @property
    def base32(self) -> str:
        return base32_encode(self.bytes)

    @classmethod
    def from_base32(cls, text: str) -> "NarDigest":
        return cls(base32_decode(text, 32))

    @classmethod
    def from_hex(cls, text: str) -> "NarDigest":
        return cls(bytes.fromhex(text))


def nar_hash(tree: NarNode) -> NarDigest:
    return NarDigest(hashlib.sha256(nar_serialize(tree)).digest())


def tree_from_disk(path, exclude_vcs: bool = False) -> NarNode:
    """Build a nar tree mirroring the file system at ``path``.

    With ``exclude_vcs`` the usual VCS bookkeeping directories (.git, .svn,
    .hg) are skipped, matching how checkout hashes are computed.
    """
    path = os.fspath(path)
    try:
        st = os.lstat(path)
    except OSError:
        raise UnreadableEntry(path) from None
    if stat.S_ISLNK(st.st_mode):
        return Symlink(os.readlink(path).encode("utf-8", "surrogateescape"))
    if stat.S_ISREG(st.st_mode):
        try:
            with open(path, "rb") as fh:
                contents = fh.read()
        except OSError:
            raise UnreadableEntry(path) from None
        return Regular(contents, executable=bool(st.st_mode & 0o111))
    if stat.S_ISDIR(st.st_mode):
        entries = {}
        try:
            names = os.listdir(path)
        except OSError:
            raise UnreadableEntry(path) from None
        for name in names:
            raw = name.encode("utf-8", "surrogateescape")
            if exclude_vcs and raw in VCS_DIRS:
                continue
            entries[raw] = tree_from_disk(
                os.path.join(path, name), exclude_vcs=exclude_vcs
            )
        return Directory(entries)
    raise UnsupportedNodeType(path)


def tree_to_disk(tree: NarNode, path) -> None:
    """Materialize a nar tree at ``path`` (inverse of tree_from_disk as far
    as nar semantics go: only the executable bit is applied)."""
    path = os.fspath(path)
    if isinstance(tree, Regular):
        with open(path, "wb") as fh:
            fh.write(tree.contents)
        os.chmod(path, 0o755 if tree.executable else 0o644)
    elif isinstance(tree, Symlink):
        os.symlink(tree.target.decode("utf-8", "surrogateescape"), path)
    elif isinstance(tree, Directory):
        os.makedirs(path, exist_ok=True)
        for name, node in tree.entries.items():
            tree_to_disk(node, os.path.join(path, name.decode("utf-8", "surrogateescape")))
    else:
        raise NarError(f"not a nar node: {type(tree).__name__}")


def tree_lookup(tree: NarNode, path: bytes):
    """Resolve a '/'-separated relative path inside a tree, or None."""
    node = tree
    for part in path.split(b"/"):
        if not part or part == b".":
            continue
        if not isinstance(node, Directory) or part not in node.entries:
            return None
        node = node.entries[part]
    return node

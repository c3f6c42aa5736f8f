"""SWHID computation, parsing, and formatting.

cnt and dir identifiers coincide with Git blob and tree hashing, so the
digests computed here can be cross-checked against any Git implementation.
rev/rel/snp identifiers are parsed and formatted but never computed: local
recovery only consumes them.

Note one deliberate divergence from nar hashing: empty directories are
silently skipped when computing dir SWHIDs, because Git trees cannot
represent them.  Two trees that differ only by empty directories share a
dir SWHID but have different nar hashes; that mismatch is exactly why
nar-sha256 ExtID lookup exists as a separate resolution path.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from . import nar
from .errors import ToolError

OBJECT_TYPES = ("cnt", "dir", "rev", "rel", "snp")

_SWHID_RE = re.compile(r"^swh:(\d+):(\w+):([0-9a-f]+)$")


class MalformedSwhid(ToolError):
    pass


@dataclass(frozen=True)
class Swhid:
    object_type: str
    digest: bytes
    scheme_version: int = 1

    def __post_init__(self):
        if self.scheme_version != 1:
            raise MalformedSwhid(f"unsupported scheme version {self.scheme_version}")
        if self.object_type not in OBJECT_TYPES:
            raise MalformedSwhid(f"unknown object type {self.object_type!r}")
        if len(self.digest) != 20:
            raise MalformedSwhid("digest must be 20 bytes")

    def __str__(self):
        return format_swhid(self)


def parse_swhid(text: str) -> Swhid:
    m = _SWHID_RE.match(text)
    if not m:
        raise MalformedSwhid(f"not a SWHID: {text!r}")
    version, object_type, hexdigest = m.groups()
    if version != "1":
        raise MalformedSwhid(f"unsupported scheme version {version}")
    if object_type not in OBJECT_TYPES:
        raise MalformedSwhid(f"unknown object type {object_type!r}")
    if len(hexdigest) != 40 or hexdigest != hexdigest.lower():
        raise MalformedSwhid("digest must be 40 lowercase hex characters")
    return Swhid(object_type, bytes.fromhex(hexdigest))


def format_swhid(swhid: Swhid) -> str:
    return f"swh:{swhid.scheme_version}:{swhid.object_type}:{swhid.digest.hex()}"


def _git_object_digest(kind: bytes, body: bytes) -> bytes:
    h = hashlib.sha1()
    h.update(kind + b" " + str(len(body)).encode("ascii") + b"\0")
    h.update(body)
    return h.digest()


def swhid_for_content(data: bytes) -> Swhid:
    """cnt SWHID: Git blob hash of the raw bytes (name and mode never enter)."""
    return Swhid("cnt", _git_object_digest(b"blob", data))


def _tree_entry_sort_key(item):
    name, node = item
    # Git sorts tree entries as if directory names ended in '/'
    return name + b"/" if isinstance(node, nar.Directory) else name


def _git_tree_digest(tree: nar.Directory) -> bytes | None:
    """Git tree hash of a nar directory, or None if it serializes empty."""
    entries = []
    for name, node in sorted(tree.entries.items(), key=_tree_entry_sort_key):
        if isinstance(node, nar.Directory):
            sub = _git_tree_digest(node)
            if sub is None:
                continue
            mode, digest = b"40000", sub
        elif isinstance(node, nar.Regular):
            mode = b"100755" if node.executable else b"100644"
            digest = _git_object_digest(b"blob", node.contents)
        elif isinstance(node, nar.Symlink):
            mode = b"120000"
            digest = _git_object_digest(b"blob", node.target)
        else:
            raise UnsupportedTreeNode(name)
        entries.append(mode + b" " + name + b"\0" + digest)
    if not entries:
        return None
    return _git_object_digest(b"tree", b"".join(entries))


class UnsupportedTreeNode(ToolError):
    pass


# Git's well-known hash of the empty tree object ("tree 0\0")
EMPTY_TREE_DIGEST = _git_object_digest(b"tree", b"")


def swhid_for_directory(tree) -> Swhid:
    """dir SWHID of a nar tree or an on-disk directory path.

    Equals the Git tree hash of the same directory; empty subdirectories
    are skipped.  A tree that is empty overall maps to the empty-tree hash.
    """
    if not isinstance(tree, (nar.Regular, nar.Symlink, nar.Directory)):
        tree = nar.tree_from_disk(tree, exclude_vcs=True)
    if not isinstance(tree, nar.Directory):
        raise UnsupportedTreeNode("dir SWHIDs require a directory")
    digest = _git_tree_digest(tree)
    return Swhid("dir", digest if digest is not None else EMPTY_TREE_DIGEST)

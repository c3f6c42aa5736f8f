"""Source recovery ladder and archival lint.

resolve() takes one declared source origin and tries, in order: the
upstream URLs, then the archive fallbacks (nar-sha256 ExtID, revision
lookup, tag lookup, description-database rebuild).  A digest check gates
every rung; a mismatch never aborts the ladder, it advances it, and no
unverified bytes are ever returned.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field

from . import disarchive, heritage, nar
from .errors import ToolError
from .nar import NarDigest
from .swhid import Swhid

VCS_METHODS = ("git-fetch", "svn-fetch")


class ResolverError(ToolError):
    pass


class HashMismatch(ResolverError):
    def __init__(self, rung, expected, actual):
        super().__init__(f"{rung}: expected {expected}, got {actual}")
        self.rung = rung
        self.expected = expected
        self.actual = actual


class AllPathsFailed(ResolverError):
    def __init__(self, trail):
        lines = "; ".join(f"{rung}: {error}" for rung, error in trail)
        super().__init__(f"every recovery path failed ({lines})")
        self.trail = trail


class UnsupportedCombination(ResolverError):
    pass


@dataclass
class FileDigest:
    sha256: bytes

    @property
    def sri(self) -> str:
        return "sha256-" + base64.b64encode(self.sha256).decode("ascii")


@dataclass
class SourceRecord:
    method: str  # url-fetch | git-fetch | svn-fetch
    urls: list
    expected: object  # FileDigest for url-fetch, NarDigest for VCS
    git_ref: dict | None = None  # {"commit": bytes} or {"tag": str}
    svn_rev: int | None = None
    svn_subdirs: list | None = None
    subdir_digests: dict | None = None  # subdir -> NarDigest

    def __post_init__(self):
        if self.method not in ("url-fetch",) + VCS_METHODS:
            raise ResolverError(f"unknown method {self.method!r}")
        if not self.urls:
            raise ResolverError("a source record needs at least one URL")
        if self.method == "url-fetch" and not isinstance(self.expected, FileDigest):
            raise ResolverError("url-fetch records expect a file digest")
        if self.method in VCS_METHODS and not isinstance(self.expected, NarDigest):
            # per-subdirectory digests may stand in for a whole-tree digest
            if not (self.method == "svn-fetch" and self.subdir_digests):
                raise ResolverError("VCS records expect a nar digest")
        if self.method == "git-fetch" and not self.git_ref:
            raise ResolverError("git-fetch records need a commit or tag")


@dataclass
class Resolution:
    outcome: object  # bytes or nar tree
    provenance: str  # upstream | swh-extid | swh-revision | swh-tag | disarchive-rebuild
    verified: bool = True
    trail: list = field(default_factory=list)


class UpstreamFetcher:
    """Interface to upstream networks; injected so the ladder is testable.

    fetch_url returns the raw bytes behind a URL; fetch_checkout produces a
    nar tree for a VCS reference.  Both raise ToolError subclasses on
    failure.
    """

    def fetch_url(self, url: str) -> bytes:
        raise ResolverError("no upstream file fetcher configured")

    def fetch_checkout(self, record: SourceRecord, url: str) -> nar.NarNode:
        raise ResolverError("no upstream checkout fetcher configured")


def _verify_file(data: bytes, expected: FileDigest, rung: str) -> None:
    actual = hashlib.sha256(data).digest()
    if actual != expected.sha256:
        raise HashMismatch(rung, expected.sha256.hex(), actual.hex())


def _verify_tree(tree, record: SourceRecord, rung: str) -> None:
    if record.svn_subdirs:
        if not record.subdir_digests:
            raise UnsupportedCombination(
                "combined digests over several sub-directories cannot be"
                " verified per sub-directory"
            )
        for subdir in record.svn_subdirs:
            node = nar.tree_lookup(tree, subdir.encode())
            expected = record.subdir_digests[subdir]
            if node is None:
                raise HashMismatch(rung, expected.base32, "<missing subdir>")
            actual = nar.nar_hash(node)
            if actual != expected:
                raise HashMismatch(rung, expected.base32, actual.base32)
        return
    actual = nar.nar_hash(tree)
    if actual != record.expected:
        raise HashMismatch(rung, record.expected.base32, actual.base32)


def _place_subtree(root: nar.Directory, path: bytes, subtree) -> None:
    parts = [p for p in path.split(b"/") if p]
    cur = root
    for part in parts[:-1]:
        child = cur.entries.get(part)
        if not isinstance(child, nar.Directory):
            child = nar.Directory()
            cur.entries[part] = child
        cur = child
    cur.entries[parts[-1]] = subtree


def _vault_tree(client, target: Swhid, record, rung):
    tree = client.vault_fetch(target)
    _verify_tree(tree, record, rung)
    return tree


def resolve(record: SourceRecord, client, db, fetcher) -> Resolution:
    """Work down the recovery ladder until a rung yields verified content."""
    if record.method == "svn-fetch" and record.svn_subdirs and not record.subdir_digests:
        raise UnsupportedCombination(
            "combined sub-directory records are not resolvable"
        )
    trail = []

    # (1) upstream, every URL in listed order
    for url in record.urls:
        try:
            if record.method == "url-fetch":
                data = fetcher.fetch_url(url)
                _verify_file(data, record.expected, f"upstream {url}")
                return Resolution(data, "upstream", trail=trail)
            tree = fetcher.fetch_checkout(record, url)
            _verify_tree(tree, record, f"upstream {url}")
            return Resolution(tree, "upstream", trail=trail)
        except ToolError as exc:
            trail.append((f"upstream {url}", exc))

    if record.method in VCS_METHODS:
        # (2) content-addressed: nar-sha256 ExtID
        try:
            if record.svn_subdirs:
                root = nar.Directory()
                for subdir in record.svn_subdirs:
                    digest = record.subdir_digests[subdir]
                    target = client.resolve_extid_nar_sha256(digest)
                    subtree = client.vault_fetch(target)
                    _place_subtree(root, subdir.encode(), subtree)
                _verify_tree(root, record, "swh-extid")
                return Resolution(root, "swh-extid", trail=trail)
            target = client.resolve_extid_nar_sha256(record.expected)
            tree = _vault_tree(client, target, record, "swh-extid")
            return Resolution(tree, "swh-extid", trail=trail)
        except ToolError as exc:
            trail.append(("swh-extid", exc))

        # (3) git by commit
        commit = (record.git_ref or {}).get("commit")
        if commit:
            try:
                _rev, root = client.lookup_revision(commit)
                tree = _vault_tree(client, root, record, "swh-revision")
                return Resolution(tree, "swh-revision", trail=trail)
            except ToolError as exc:
                trail.append(("swh-revision", exc))

        # (4) git by tag; the URL is only a hint, so try each one
        tag = (record.git_ref or {}).get("tag")
        if tag:
            for url in record.urls:
                try:
                    commit = client.lookup_origin_tag(url, tag)
                    _rev, root = client.lookup_revision(commit)
                    tree = _vault_tree(client, root, record, "swh-tag")
                    return Resolution(tree, "swh-tag", trail=trail)
                except ToolError as exc:
                    trail.append((f"swh-tag {url}", exc))
    else:
        # (5) rebuild the file from its description plus archived contents
        try:
            desc = disarchive.description_db_lookup(record.expected.sha256, db)
            provider = VaultContentProvider(client)
            data = disarchive.assemble(desc, provider)
            _verify_file(data, record.expected, "disarchive-rebuild")
            return Resolution(data, "disarchive-rebuild", trail=trail)
        except ToolError as exc:
            trail.append(("disarchive-rebuild", exc))

    raise AllPathsFailed(trail)


class VaultContentProvider(disarchive.ContentProvider):
    """Assembly content provider backed by the archive vault."""

    def __init__(self, client):
        self.client = client

    def get_tree(self, ref):
        for address in ref.addresses:
            try:
                return self.client.vault_fetch(address)
            except ToolError:
                continue
        raise disarchive.ContentUnavailable(
            f"no address of {ref.name!r} could be cooked"
        )

    def get_file(self, ref):
        # flat cooking of a cnt object is not offered; cook the parent is a
        # server-side concern, so bare files are recovered via upstream only
        raise disarchive.ContentUnavailable(
            f"bare file {ref.name!r} is not vault-recoverable"
        )


@dataclass
class ArchivalStatus:
    status: str  # archived | not-archived | unknown
    save_request: heritage.SaveRequest | None = None
    note: str = ""


def check_archival(record: SourceRecord, client) -> ArchivalStatus:
    """Archival lint: query first, then submit a save request for VCS
    sources that are missing.  Raw file URLs are never submitted."""
    if record.method in VCS_METHODS:
        digests = (
            [record.expected]
            if isinstance(record.expected, NarDigest)
            else list((record.subdir_digests or {}).values())
        )
        try:
            for digest in digests:
                client.resolve_extid_nar_sha256(digest)
            return ArchivalStatus("archived")
        except heritage.NotFound:
            pass
        request = client.save_code_now(record.urls[0], record.method.split("-")[0])
        return ArchivalStatus("not-archived", save_request=request)
    return ArchivalStatus(
        "not-archived",
        note="tarball URLs cannot be submitted for on-demand archiving",
    )


# --- sources manifest ------------------------------------------------------


def _record_to_manifest_entry(record: SourceRecord) -> dict:
    if record.method == "url-fetch":
        return {
            "type": "url",
            "urls": list(record.urls),
            "integrity": record.expected.sri,
        }
    integrity = "nar-sha256-" + record.expected.base32
    if record.method == "git-fetch":
        ref = record.git_ref or {}
        entry = {
            "type": "git",
            "git_url": record.urls[0],
            "integrity": integrity,
        }
        if "commit" in ref:
            entry["git_ref"] = ref["commit"].hex()
        elif "tag" in ref:
            entry["git_ref"] = ref["tag"]
        return entry
    entry = {
        "type": "svn",
        "svn_url": record.urls[0],
        "integrity": integrity,
    }
    if record.svn_rev is not None:
        entry["svn_revision"] = record.svn_rev
    if record.svn_subdirs:
        entry["svn_subdirs"] = list(record.svn_subdirs)
    return entry


def emit_sources_manifest(records: list) -> bytes:
    """Deterministic machine-readable origin list: sorted by first URL,
    canonical JSON rendering."""
    entries = sorted(
        (_record_to_manifest_entry(r) for r in records),
        key=lambda e: (
            (e.get("urls") or [e.get("git_url") or e.get("svn_url")])[0],
            json.dumps(e, sort_keys=True),
        ),
    )
    document = {"sources": entries, "version": "1"}
    return (
        json.dumps(document, sort_keys=True, separators=(",", ": "), indent=2) + "\n"
    ).encode("utf-8")


def _parse_integrity(text: str, kind: str):
    if kind == "url":
        prefix = "sha256-"
        if not text.startswith(prefix):
            raise ResolverError(f"unsupported integrity {text!r}")
        return FileDigest(base64.b64decode(text[len(prefix):]))
    prefix = "nar-sha256-"
    if not text.startswith(prefix):
        raise ResolverError(f"unsupported integrity {text!r}")
    return NarDigest.from_base32(text[len(prefix):])


def parse_sources_manifest(data: bytes) -> list:
    try:
        document = json.loads(data)
    except ValueError as exc:
        raise ResolverError(f"unreadable manifest: {exc}") from exc
    if document.get("version") != "1":
        raise ResolverError("unsupported manifest version")
    records = []
    for entry in document.get("sources", []):
        kind = entry.get("type")
        if kind == "url":
            records.append(
                SourceRecord(
                    "url-fetch",
                    list(entry["urls"]),
                    _parse_integrity(entry["integrity"], "url"),
                )
            )
        elif kind == "git":
            ref_text = entry.get("git_ref", "")
            is_commit = len(ref_text) == 40 and all(
                c in "0123456789abcdef" for c in ref_text
            )
            git_ref = (
                {"commit": bytes.fromhex(ref_text)} if is_commit else {"tag": ref_text}
            )
            records.append(
                SourceRecord(
                    "git-fetch",
                    [entry["git_url"]],
                    _parse_integrity(entry["integrity"], "git"),
                    git_ref=git_ref,
                )
            )
        elif kind == "svn":
            records.append(
                SourceRecord(
                    "svn-fetch",
                    [entry["svn_url"]],
                    _parse_integrity(entry["integrity"], "svn"),
                    svn_rev=entry.get("svn_revision"),
                    svn_subdirs=entry.get("svn_subdirs"),
                )
            )
        else:
            raise ResolverError(f"unknown source type {kind!r}")
    return records

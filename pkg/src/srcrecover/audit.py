"""Link-rot and archive-coverage audit engine.

Given a source manifest snapshot this module classifies every origin
(available / missing / hash-mismatch with fallbacks off by construction),
computes the identifiers the archive would store for it, checks coverage
through bulk existence queries, produces source-type censuses, and ranks
sources by how many packages transitively depend on them.  Reports render
to CSV time series suitable for drop-in plotting.
"""

from __future__ import annotations

import csv
import hashlib
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import disarchive, nar
from .errors import ToolError
from .resolver import SourceRecord, VCS_METHODS
from .swhid import swhid_for_content

ROT_STATUSES = ("available", "missing", "hash_mismatch", "skipped")
COVERAGE_STATUSES = ("stored", "missing", "undetermined")

HIGH_LEVEL_TYPES = ("vcs", "download")
VCS_TYPES = ("git", "svn", "other")
DOWNLOAD_TYPES = ("tar-gz", "tar-xz", "tar-bz2", "tar", "zip", "text", "other")

_TEXT_SUFFIXES = (".patch", ".diff", ".txt", ".scm", ".el", ".py", ".sh", ".c", ".h")


class AuditError(ToolError):
    pass


class CycleDetected(AuditError):
    pass


@dataclass
class AuditRecord:
    source: SourceRecord
    snapshot_label: str = ""
    rot_status: str | None = None
    swhids: list | None = None  # None = source could not be processed
    coverage_status: str | None = None


@dataclass
class SnapshotReport:
    label: str
    date: str
    total: int
    rot_counts: dict = field(default_factory=dict)
    coverage_counts: dict = field(default_factory=dict)
    high_level: dict = field(default_factory=dict)
    vcs_types: dict = field(default_factory=dict)
    download_types: dict = field(default_factory=dict)

    def fractions(self, counts: dict) -> dict:
        total = sum(counts.values())
        if not total:
            return {k: 0.0 for k in counts}
        return {k: v / total for k, v in counts.items()}


def classify_rot(record: SourceRecord, fetcher) -> str:
    """Availability of one origin with every fallback disabled: the only
    collaborator is the upstream fetcher."""
    obtained = False
    for url in record.urls:
        try:
            if record.method == "url-fetch":
                data = fetcher.fetch_url(url)
                obtained = True
                if hashlib.sha256(data).digest() == record.expected.sha256:
                    return "available"
            else:
                tree = fetcher.fetch_checkout(record, url)
                obtained = True
                if nar.nar_hash(tree) == record.expected:
                    return "available"
        except NotImplementedError:
            return "skipped"
        except ToolError:
            continue
    return "hash_mismatch" if obtained else "missing"


def compute_swhids(record: SourceRecord, artifact) -> list | None:
    """Identifiers the archive would store for a fetched artifact, or None
    when the artifact cannot be processed.

    Tarballs are disassembled and contribute their directory identifier;
    bare files contribute a content identifier; VCS checkouts contribute
    the directory identifier of the worktree (one per sub-directory for
    partial Subversion checkouts).
    """
    if record.method in VCS_METHODS:
        if record.method == "svn-fetch" and record.svn_subdirs:
            out = []
            for subdir in record.svn_subdirs:
                node = nar.tree_lookup(artifact, subdir.encode())
                if node is None:
                    return None
                out.append(_dir_swhid(node))
            return out
        return [_dir_swhid(artifact)]
    assert isinstance(artifact, (bytes, bytearray))
    data = bytes(artifact)
    try:
        desc, content = disarchive.disassemble(data, record.urls[0].rsplit("/", 1)[-1])
    except ToolError:
        return None
    if isinstance(desc.root, disarchive.ContentRef):
        return [swhid_for_content(content)]
    layer = desc.root
    while not isinstance(layer, (disarchive.DirectoryRef, disarchive.ContentRef)):
        layer = layer.input
    return list(layer.addresses)


def _dir_swhid(tree):
    from .swhid import swhid_for_directory

    return swhid_for_directory(tree)


def coverage(records: list, client) -> list:
    """Set coverage_status on every record via bulk existence queries.

    Client errors propagate and abort the batch: partial coverage results
    are never produced.
    """
    wanted = []
    for record in records:
        if record.swhids:
            wanted.extend(record.swhids)
    known = client.known(wanted) if wanted else {}
    for record in records:
        if not record.swhids:
            record.coverage_status = "undetermined"
        elif all(known[s] for s in record.swhids):
            record.coverage_status = "stored"
        else:
            record.coverage_status = "missing"
    return records


def classify_source_type(record: SourceRecord) -> tuple[str, str]:
    """(high-level, fine-grained) bucket for one source record."""
    if record.method == "git-fetch":
        return "vcs", "git"
    if record.method == "svn-fetch":
        return "vcs", "svn"
    url = record.urls[0].lower()
    if url.endswith((".tar.gz", ".tgz")):
        return "download", "tar-gz"
    if url.endswith((".tar.xz", ".txz")):
        return "download", "tar-xz"
    if url.endswith((".tar.bz2", ".tbz2")):
        return "download", "tar-bz2"
    if url.endswith(".tar"):
        return "download", "tar"
    if url.endswith(".zip"):
        return "download", "zip"
    if url.endswith(_TEXT_SUFFIXES):
        return "download", "text"
    return "download", "other"


def census(records: list, label: str = "", date: str = "") -> SnapshotReport:
    """Deterministic type breakdown; invariant under record order."""
    report = SnapshotReport(label=label, date=date, total=len(records))
    report.rot_counts = {k: 0 for k in ROT_STATUSES}
    report.coverage_counts = {k: 0 for k in COVERAGE_STATUSES}
    report.high_level = {k: 0 for k in HIGH_LEVEL_TYPES}
    report.vcs_types = {k: 0 for k in VCS_TYPES}
    report.download_types = {k: 0 for k in DOWNLOAD_TYPES}
    for record in records:
        source = record.source if isinstance(record, AuditRecord) else record
        high, fine = classify_source_type(source)
        report.high_level[high] += 1
        if high == "vcs":
            report.vcs_types[fine] += 1
        else:
            report.download_types[fine] += 1
        if isinstance(record, AuditRecord):
            if record.rot_status:
                report.rot_counts[record.rot_status] += 1
            if record.coverage_status:
                report.coverage_counts[record.coverage_status] += 1
    return report


def run_rot_audit(records: list, fetcher, label: str = "",
                  parallelism: int = 8) -> list:
    """classify_rot over a manifest with bounded parallelism; the result
    order matches the input order regardless of completion order."""
    audits = [AuditRecord(source=r, snapshot_label=label) for r in records]
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        statuses = list(pool.map(lambda r: classify_rot(r, fetcher), records))
    for audit_record, status in zip(audits, statuses):
        audit_record.rot_status = status
    return audits


# --- CSV rendering ---------------------------------------------------------


def _write_csv(header: list, rows: list) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def rot_csv(reports: list) -> bytes:
    rows = []
    for r in reports:
        f = r.fractions(r.rot_counts)
        rows.append([
            r.date or r.label,
            f"{f['available']:.6f}",
            f"{f['missing']:.6f}",
            f"{f['hash_mismatch']:.6f}",
        ])
    return _write_csv(["date", "available-rel", "missing-rel", "hash-mismatch-rel"], rows)


def coverage_csv(reports: list) -> bytes:
    rows = []
    for r in reports:
        f = r.fractions(r.coverage_counts)
        rows.append([
            r.date or r.label,
            f"{f['stored']:.6f}",
            f"{f['missing']:.6f}",
            f"{f['undetermined']:.6f}",
        ])
    return _write_csv(["date", "stored-rel", "missing-rel", "unknown-rel"], rows)


def census_high_csv(reports: list) -> bytes:
    rows = []
    for r in reports:
        f = r.fractions(r.high_level)
        rows.append([r.date or r.label, f"{f['vcs']:.6f}", f"{f['download']:.6f}"])
    return _write_csv(["date", "vcs-rel", "download-rel"], rows)


def census_vcs_csv(reports: list) -> bytes:
    rows = []
    for r in reports:
        f = r.fractions(r.vcs_types)
        rows.append([
            r.date or r.label,
            f"{f['git']:.6f}", f"{f['svn']:.6f}", f"{f['other']:.6f}",
        ])
    return _write_csv(["date", "git-rel", "svn-rel", "other-rel"], rows)


def census_download_csv(reports: list) -> bytes:
    rows = []
    header = ["date"] + [f"{t}-rel" for t in DOWNLOAD_TYPES]
    for r in reports:
        f = r.fractions(r.download_types)
        rows.append([r.date or r.label] + [f"{f[t]:.6f}" for t in DOWNLOAD_TYPES])
    return _write_csv(header, rows)


# --- impact ranking ----------------------------------------------------------


def impact_rank(packages: list, edges: list) -> dict:
    """Transitive dependent count + 1 (itself) per package.

    ``edges`` is a list of (dependent, dependency) pairs over package
    names; they must form a DAG.
    """
    dependents: dict = {p: set() for p in packages}
    for dependent, dependency in edges:
        dependents.setdefault(dependency, set()).add(dependent)
        dependents.setdefault(dependent, set())

    order = []
    state: dict = {}  # 0 in progress, 1 done

    def visit(node, stack):
        if state.get(node) == 1:
            return
        if state.get(node) == 0:
            raise CycleDetected(" -> ".join(stack + [node]))
        state[node] = 0
        for dep in dependents[node]:
            visit(dep, stack + [node])
        state[node] = 1
        order.append(node)

    for node in dependents:
        visit(node, [])

    closure: dict = {}
    for node in order:  # dependents of a node are finished before it
        acc = set()
        for dep in dependents[node]:
            acc.add(dep)
            acc |= closure[dep]
        closure[node] = acc
    return {node: len(closure[node]) + 1 for node in dependents}


def impact_csv(ranks: dict) -> bytes:
    rows = [
        [name, str(count)]
        for name, count in sorted(ranks.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return _write_csv(["package", "impact"], rows)

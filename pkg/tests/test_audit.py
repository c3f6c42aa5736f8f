import hashlib
import io
import tarfile

import pytest

from srcrecover import audit, nar
from srcrecover.audit import (
    AuditRecord,
    CycleDetected,
    census,
    census_download_csv,
    census_high_csv,
    classify_rot,
    classify_source_type,
    compute_swhids,
    coverage,
    coverage_csv,
    impact_csv,
    impact_rank,
    rot_csv,
    run_rot_audit,
)
from srcrecover.resolver import FileDigest, ResolverError, SourceRecord
from srcrecover.swhid import Swhid, swhid_for_content

from test_resolver import Fetcher, TREE, TREE_DIGEST, file_record, git_record


def tar_bytes(name="p-1.0"):
    buffer = io.BytesIO()
    with tarfile.open(fileobj=buffer, mode="w", format=tarfile.GNU_FORMAT) as tf:
        info = tarfile.TarInfo(f"{name}/f.c")
        payload = b"int x;\n"
        info.size = len(payload)
        tf.addfile(info, io.BytesIO(payload))
    return buffer.getvalue()


# --- rot classification -----------------------------------------------------


def test_rot_available():
    data = b"tarball bytes"
    record = file_record(
        urls=["https://a/p.tar"], digest=FileDigest(hashlib.sha256(data).digest())
    )
    fetcher = Fetcher(files={"https://a/p.tar": data})
    assert classify_rot(record, fetcher) == "available"


def test_rot_missing():
    assert classify_rot(file_record(), Fetcher()) == "missing"


def test_rot_hash_mismatch_needs_obtained_bytes():
    record = file_record(urls=["https://a/p.tar"])
    fetcher = Fetcher(files={"https://a/p.tar": b"tampered"})
    assert classify_rot(record, fetcher) == "hash_mismatch"


def test_rot_mirror_saves_origin():
    data = b"good"
    record = file_record(
        urls=["https://dead/p.tar", "https://live/p.tar"],
        digest=FileDigest(hashlib.sha256(data).digest()),
    )
    fetcher = Fetcher(files={"https://live/p.tar": data})
    assert classify_rot(record, fetcher) == "available"


def test_rot_vcs_checkout():
    record = git_record()
    fetcher = Fetcher(checkouts={"https://host/p.git": TREE})
    assert classify_rot(record, fetcher) == "available"


def test_rot_skipped_when_fetcher_cannot():
    class PartialFetcher(Fetcher):
        def fetch_checkout(self, record, url):
            raise NotImplementedError("no VCS support here")

    assert classify_rot(git_record(), PartialFetcher()) == "skipped"


def test_run_rot_audit_preserves_order():
    good = b"ok"
    records = [
        file_record(urls=[f"https://h/{i}.tar"],
                    digest=FileDigest(hashlib.sha256(good).digest()))
        for i in range(20)
    ]
    fetcher = Fetcher(files={f"https://h/{i}.tar": good for i in range(0, 20, 2)})
    audits = run_rot_audit(records, fetcher, label="t", parallelism=4)
    assert [a.source for a in audits] == records
    statuses = [a.rot_status for a in audits]
    assert statuses == ["available", "missing"] * 10


# --- archive identifiers ----------------------------------------------------


def test_swhids_for_tarball():
    record = file_record(urls=["https://h/p-1.0.tar"])
    ids = compute_swhids(record, tar_bytes())
    assert len(ids) == 1 and ids[0].object_type == "dir"


def test_swhids_for_compressed_tarball():
    import gzip

    record = file_record(urls=["https://h/p-1.0.tar.gz"])
    ids = compute_swhids(record, gzip.compress(tar_bytes()))
    assert len(ids) == 1 and ids[0].object_type == "dir"


def test_swhids_for_patch():
    patch = b"--- a\n+++ b\n"
    record = file_record(urls=["https://h/fix.patch"])
    ids = compute_swhids(record, patch)
    assert ids == [swhid_for_content(patch)]


def test_swhids_for_unprocessable():
    record = file_record(urls=["https://h/p.tar.lz"])
    assert compute_swhids(record, b"LZIP\x01 unsupported") is None


def test_swhids_for_checkout():
    from srcrecover.swhid import swhid_for_directory

    assert compute_swhids(git_record(), TREE) == [swhid_for_directory(TREE)]


def test_swhids_for_svn_subdirs():
    record = SourceRecord(
        "svn-fetch", ["svn://h/r"], None,
        svn_subdirs=["trunk/a", "trunk/b"],
        subdir_digests={"trunk/a": TREE_DIGEST, "trunk/b": TREE_DIGEST},
    )
    tree = nar.Directory({
        b"trunk": nar.Directory({b"a": TREE, b"b": TREE}),
    })
    ids = compute_swhids(record, tree)
    assert len(ids) == 2 and ids[0] == ids[1]


# --- coverage ---------------------------------------------------------------


class CountingKnown:
    def __init__(self, archived):
        self.archived = archived
        self.calls = 0

    def known(self, ids):
        self.calls += 1
        return {i: i in self.archived for i in ids}


def audit_record(swhids):
    return AuditRecord(source=file_record(), swhids=swhids)


def test_coverage_hand_counted():
    stored = Swhid("dir", hashlib.sha1(b"s").digest())
    absent = Swhid("dir", hashlib.sha1(b"m").digest())
    records = [
        audit_record([stored]),
        audit_record([stored, absent]),  # partial presence is still missing
        audit_record([absent]),
        audit_record(None),
        audit_record([stored]),
    ]
    client = CountingKnown({stored})
    coverage(records, client)
    assert [r.coverage_status for r in records] == [
        "stored", "missing", "missing", "undetermined", "stored",
    ]
    assert client.calls == 1  # one bulk query for the whole batch


def test_coverage_client_error_leaves_no_partial_state():
    class Exploding:
        def known(self, ids):
            raise RuntimeError("boom")

    records = [audit_record([Swhid("dir", b"\1" * 20)])]
    with pytest.raises(RuntimeError):
        coverage(records, Exploding())
    assert records[0].coverage_status is None


# --- census -----------------------------------------------------------------


def url_record(url):
    return file_record(urls=[url])


def test_source_type_buckets():
    cases = {
        "https://h/p-1.tar.gz": ("download", "tar-gz"),
        "https://h/p.TGZ": ("download", "tar-gz"),
        "https://h/p.tar.xz": ("download", "tar-xz"),
        "https://h/p.tar.bz2": ("download", "tar-bz2"),
        "https://h/p.tar": ("download", "tar"),
        "https://h/p.zip": ("download", "zip"),
        "https://h/fix.patch": ("download", "text"),
        "https://h/odd.bin": ("download", "other"),
    }
    for url, expected in cases.items():
        assert classify_source_type(url_record(url)) == expected
    assert classify_source_type(git_record()) == ("vcs", "git")
    assert classify_source_type(
        SourceRecord("svn-fetch", ["svn://h"], TREE_DIGEST)
    ) == ("vcs", "svn")


def test_census_counts_and_order_invariance():
    records = (
        [git_record() for _ in range(3)]
        + [url_record("https://h/a.tar.gz"), url_record("https://h/b.zip")]
    )
    report = census(records, label="snap", date="2020-01-01")
    assert report.total == 5
    assert report.high_level == {"vcs": 3, "download": 2}
    assert report.vcs_types["git"] == 3
    assert report.download_types["tar-gz"] == 1
    assert report.download_types["zip"] == 1
    shuffled = census(list(reversed(records)))
    assert shuffled.high_level == report.high_level
    assert shuffled.download_types == report.download_types


def test_census_fractions_sum_to_one():
    records = [url_record(f"https://h/{i}.tar.gz") for i in range(7)]
    records += [git_record() for _ in range(3)]
    report = census(records)
    fractions = report.fractions(report.high_level)
    assert abs(sum(fractions.values()) - 1.0) < 1e-9
    assert fractions["download"] == 0.7


def test_csv_renderings():
    record = AuditRecord(source=git_record(), rot_status="available",
                         coverage_status="stored")
    report = census([record], date="2021-06-01")
    rot = rot_csv([report]).decode()
    assert rot.splitlines()[0] == "date,available-rel,missing-rel,hash-mismatch-rel"
    assert rot.splitlines()[1].startswith("2021-06-01,1.000000,")
    cov = coverage_csv([report]).decode()
    assert cov.splitlines()[0] == "date,stored-rel,missing-rel,unknown-rel"
    high = census_high_csv([report]).decode()
    assert high.splitlines()[1] == "2021-06-01,1.000000,0.000000"
    download = census_download_csv([report]).decode()
    assert download.splitlines()[0].count("-rel") == 7


# --- impact -----------------------------------------------------------------


def test_impact_leaf_is_one():
    assert impact_rank(["solo"], []) == {"solo": 1}


def test_impact_chain():
    # c depends on b depends on a
    ranks = impact_rank(["a", "b", "c"], [("c", "b"), ("b", "a")])
    assert ranks == {"a": 3, "b": 2, "c": 1}


def test_impact_diamond_counts_each_dependent_once():
    edges = [("top", "left"), ("top", "right"), ("left", "base"), ("right", "base")]
    ranks = impact_rank(["base", "left", "right", "top"], edges)
    assert ranks["base"] == 4  # top is reachable twice but counted once
    assert ranks["left"] == ranks["right"] == 2
    assert ranks["top"] == 1


def test_impact_cycle_detected():
    with pytest.raises(CycleDetected):
        impact_rank(["a", "b"], [("a", "b"), ("b", "a")])


def test_impact_csv_sorted_by_count_then_name():
    ranks = impact_rank(["a", "b", "c"], [("c", "b"), ("b", "a")])
    lines = impact_csv(ranks).decode().splitlines()
    assert lines == ["package,impact", "a,3", "b,2", "c,1"]

import hashlib
import json

import pytest

from conftest import FakeClock, ScriptedTransport, make_client, tree_to_tar_bundle
from srcrecover import nar
from srcrecover.heritage import (
    KNOWN_CHUNK,
    ArchiveClient,
    ArchiveEndpoint,
    CookingFailed,
    DeadlineExceeded,
    NotFound,
    OriginNotFound,
    RateBudget,
    RateLimited,
    Rejected,
    RetryPolicy,
    TagNotFound,
    TransportError,
    TransportResponse,
)
from srcrecover.swhid import Swhid, format_swhid

BASE = "https://swh.test/api/1"


def make_swhid(i, kind="dir"):
    return Swhid(kind, hashlib.sha1(str(i).encode()).digest())


class KnownTransport:
    """known endpoint backed by a set of archived SWHIDs; counts requests."""

    def __init__(self, archived):
        self.archived = {format_swhid(s) for s in archived}
        self.calls = 0

    def request(self, method, url, body=None, headers=None):
        assert method == "POST" and url == f"{BASE}/known/"
        self.calls += 1
        ids = json.loads(body)
        assert len(ids) <= KNOWN_CHUNK
        payload = {i: {"known": i in self.archived} for i in ids}
        return TransportResponse(200, json.dumps(payload).encode())


def test_known_requires_nonempty():
    client = make_client(ScriptedTransport())
    with pytest.raises(ValueError):
        client.known([])


def test_known_maps_membership():
    a, b = make_swhid(1), make_swhid(2)
    client = make_client(KnownTransport({a}))
    assert client.known([a, b]) == {a: True, b: False}


def test_known_chunks_to_batch_limit():
    ids = [make_swhid(i) for i in range(2500)]
    transport = KnownTransport(set(ids[:100]))
    client = make_client(transport)
    result = client.known(ids)
    assert transport.calls == 3
    assert sum(result.values()) == 100


def test_known_transport_error_never_maps_to_false():
    client = make_client(ScriptedTransport({f"POST {BASE}/known/": (500, b"")}))
    with pytest.raises(TransportError):
        client.known([make_swhid(1)])


def test_extid_resolution():
    digest = nar.NarDigest(hashlib.sha256(b"tree").digest())
    target = make_swhid(9)
    transport = ScriptedTransport({
        f"GET {BASE}/extid/nar-sha256/hex:{digest.hex}/": {
            "target": format_swhid(target)
        },
    })
    client = make_client(transport)
    assert client.resolve_extid_nar_sha256(digest) == target


def test_extid_not_found():
    digest = nar.NarDigest(hashlib.sha256(b"absent").digest())
    client = make_client(ScriptedTransport())
    with pytest.raises(NotFound):
        client.resolve_extid_nar_sha256(digest)


def test_extid_malformed_payload():
    digest = nar.NarDigest(hashlib.sha256(b"x").digest())
    transport = ScriptedTransport({
        f"GET {BASE}/extid/nar-sha256/hex:{digest.hex}/": (200, b"{trunc"),
    })
    with pytest.raises(TransportError):
        make_client(transport).resolve_extid_nar_sha256(digest)


def test_lookup_revision():
    commit = hashlib.sha1(b"c").digest()
    root = make_swhid(3)
    transport = ScriptedTransport({
        f"GET {BASE}/revision/{commit.hex()}/": {
            "id": commit.hex(), "directory": root.digest.hex(),
        },
    })
    rev, directory = make_client(transport).lookup_revision(commit)
    # Git compatibility: the rev identifier embeds the commit id itself
    assert format_swhid(rev) == f"swh:1:rev:{commit.hex()}"
    assert directory == root


def test_lookup_revision_not_found():
    with pytest.raises(NotFound):
        make_client(ScriptedTransport()).lookup_revision(b"\0" * 20)


def _tag_routes(origin, tag, commit, via_release=False):
    snapshot = "ab" * 20
    target_type = "release" if via_release else "revision"
    target = ("cd" * 20) if via_release else commit.hex()
    routes = {
        f"GET {BASE}/origin/{origin}/visit/latest/": {"snapshot": snapshot},
        f"GET {BASE}/snapshot/{snapshot}/": {
            "branches": {f"refs/tags/{tag}": {
                "target_type": target_type, "target": target,
            }},
        },
    }
    if via_release:
        routes[f"GET {BASE}/release/{'cd' * 20}/"] = {
            "target_type": "revision", "target": commit.hex(),
        }
    return routes


def test_lookup_origin_tag_direct():
    commit = hashlib.sha1(b"v1").digest()
    transport = ScriptedTransport(
        _tag_routes("https://host/repo.git", "1.3.2", commit)
    )
    client = make_client(transport)
    assert client.lookup_origin_tag("https://host/repo.git", "1.3.2") == commit


def test_lookup_origin_tag_release_indirection():
    commit = hashlib.sha1(b"v2").digest()
    transport = ScriptedTransport(
        _tag_routes("https://host/r.git", "v2", commit, via_release=True)
    )
    assert make_client(transport).lookup_origin_tag("https://host/r.git", "v2") == commit


def test_lookup_origin_tag_missing_tag():
    commit = hashlib.sha1(b"v1").digest()
    transport = ScriptedTransport(_tag_routes("https://host/r.git", "v1", commit))
    client = make_client(transport)
    with pytest.raises(TagNotFound):
        client.lookup_origin_tag("https://host/r.git", "v999")


def test_lookup_origin_unknown():
    with pytest.raises(OriginNotFound):
        make_client(ScriptedTransport()).lookup_origin_tag("https://gone/x", "v1")


def _vault_routes(target, tree, status_sequence, redirect=False):
    url = f"{BASE}/vault/flat/{format_swhid(target)}/"
    bundle = tree_to_tar_bundle(tree)
    fetch = "https://swh.test/bundles/x.tar.gz"
    responses = []
    for status in status_sequence:
        entry = {"status": status}
        if status == "done":
            entry["fetch_url"] = fetch
        responses.append((200, json.dumps(entry).encode()))
    routes = {f"GET {url}": responses}
    if redirect:
        routes[f"GET {fetch}"] = TransportResponse(
            302, b"", {"Location": "https://cdn.test/real.tar.gz"}
        )
        routes["GET https://cdn.test/real.tar.gz"] = bundle
    else:
        routes[f"GET {fetch}"] = bundle
    return routes


SAMPLE_TREE = nar.Directory({
    b"f": nar.Regular(b"contents\n"),
    b"bin": nar.Directory({b"x": nar.Regular(b"#!/bin/sh\n", executable=True)}),
})


def test_vault_done_immediately():
    target = make_swhid(5)
    transport = ScriptedTransport(_vault_routes(target, SAMPLE_TREE, ["done"]))
    tree = make_client(transport).vault_fetch(target, poll_interval=0, deadline=10)
    assert nar.nar_hash(tree) == nar.nar_hash(SAMPLE_TREE)


def test_vault_follows_redirect():
    # regression: bundle downloads behind HTTP redirects must be followed
    target = make_swhid(6)
    transport = ScriptedTransport(
        _vault_routes(target, SAMPLE_TREE, ["done"], redirect=True)
    )
    tree = make_client(transport).vault_fetch(target, poll_interval=0, deadline=10)
    assert nar.nar_hash(tree) == nar.nar_hash(SAMPLE_TREE)


def test_vault_pending_forever_deadline():
    target = make_swhid(7)
    transport = ScriptedTransport(_vault_routes(target, SAMPLE_TREE, ["pending"]))
    clock = FakeClock()
    client = make_client(transport, clock=clock)
    with pytest.raises(DeadlineExceeded) as info:
        client.vault_fetch(target, poll_interval=1.0, deadline=3.0)
    assert info.value.last_status == "pending"


def test_vault_requests_cooking_when_absent():
    target = make_swhid(8)
    url = f"{BASE}/vault/flat/{format_swhid(target)}/"
    routes = _vault_routes(target, SAMPLE_TREE, ["done"])
    get_responses = routes[f"GET {url}"]
    transport = ScriptedTransport({
        f"GET {url}": [TransportResponse(404, b"")] + get_responses,
        f"POST {url}": {"status": "new"},
        **{k: v for k, v in routes.items() if not k.endswith(f"{url}")},
    })
    tree = make_client(transport).vault_fetch(target, poll_interval=0, deadline=10)
    assert nar.nar_hash(tree) == nar.nar_hash(SAMPLE_TREE)
    assert any(m == "POST" for m, _u, _b in transport.requests)


def test_vault_cooking_failed():
    target = make_swhid(9)
    transport = ScriptedTransport(_vault_routes(target, SAMPLE_TREE, ["failed"]))
    with pytest.raises(CookingFailed):
        make_client(transport).vault_fetch(target, poll_interval=0, deadline=10)


def test_save_code_now_accepted():
    url = f"{BASE}/origin/save/git/url/https://host/repo.git/"
    transport = ScriptedTransport({
        f"POST {url}": {"save_request_status": "accepted"},
    })
    request = make_client(transport).save_code_now("https://host/repo.git", "git")
    assert request.status == "accepted"
    assert request.visit_type == "git"


def test_save_code_now_rejects_file_urls_locally():
    transport = ScriptedTransport()
    client = make_client(transport)
    with pytest.raises(ValueError):
        client.save_code_now("https://host/file.tar.gz", "file")
    assert transport.requests == []  # precondition fails before any network


def test_save_code_now_duplicate_status_verbatim():
    url = f"{BASE}/origin/save/git/url/https://host/r.git/"
    transport = ScriptedTransport({f"POST {url}": {"save_request_status": "pending"}})
    assert make_client(transport).save_code_now("https://host/r.git", "git").status == "pending"


def test_save_code_now_server_rejection():
    url = f"{BASE}/origin/save/git/url/https://bad/r.git/"
    transport = ScriptedTransport({f"POST {url}": (403, b"")})
    with pytest.raises(Rejected):
        make_client(transport).save_code_now("https://bad/r.git", "git")


def test_rate_limited_after_retries():
    transport = ScriptedTransport({f"POST {BASE}/known/": (429, b"")})
    client = make_client(transport)
    with pytest.raises(RateLimited):
        client.known([make_swhid(1)])
    assert len(transport.requests) == 3  # retry policy exhausted


def test_retry_then_success():
    good = json.dumps(
        {format_swhid(make_swhid(1)): {"known": True}}
    ).encode()
    transport = ScriptedTransport({
        f"POST {BASE}/known/": [(500, b""), (200, good)],
    })
    assert make_client(transport).known([make_swhid(1)]) == {make_swhid(1): True}


def test_rate_budget_bounds_requests_per_window():
    archived = [make_swhid(i) for i in range(3)]
    transport = KnownTransport(set(archived))
    clock = FakeClock()
    budget = RateBudget(requests=2, window=60.0)
    client = make_client(transport, clock=clock, budget=budget)
    # 5 calls of one request each: windows of 2 -> sleeps between windows
    for swhid in archived + archived[:2]:
        client.known([swhid])
    assert transport.calls == 5
    # at most 2 requests happened per 60s window of the fake clock
    assert sum(1 for s in clock.sleeps if s > 0) >= 2


def test_auth_required():
    transport = ScriptedTransport({f"POST {BASE}/known/": (401, b"")})
    with pytest.raises(Exception) as info:
        make_client(transport).known([make_swhid(1)])
    from srcrecover.heritage import AuthRequired

    assert isinstance(info.value, AuthRequired)


def test_auth_token_header_sent():
    transport = ScriptedTransport()

    class Capture:
        def __init__(self):
            self.headers = None

        def request(self, method, url, body=None, headers=None):
            self.headers = headers
            return TransportResponse(404, b"")

    capture = Capture()
    endpoint = ArchiveEndpoint(base_url=BASE, auth_token="sekrit")
    client = ArchiveClient(endpoint, capture)
    with pytest.raises(NotFound):
        client.lookup_revision(b"\0" * 20)
    assert capture.headers["Authorization"] == "Bearer sekrit"

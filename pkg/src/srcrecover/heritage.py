"""Archive web-API client over an injectable transport.

Every network interaction goes through a Transport (request -> response), so
all callers can run against scripted fixtures.  The client owns retries,
redirect following, request chunking for bulk existence queries, and a
rate budget shared across concurrent callers.

Endpoint paths live in data/archive_endpoints.json so mocks and the
production binding agree on the wire surface.
"""

from __future__ import annotations

import io
import json
import tarfile
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from importlib import resources

from . import nar
from .errors import ToolError
from .swhid import Swhid, format_swhid, parse_swhid

KNOWN_CHUNK = 1000  # documented batch limit for bulk existence queries
MAX_REDIRECTS = 10

ENDPOINTS = json.loads(
    resources.files("srcrecover").joinpath("data/archive_endpoints.json").read_text()
)


class ClientError(ToolError):
    pass


class TransportError(ClientError):
    pass


class RateLimited(ClientError):
    pass


class AuthRequired(ClientError):
    pass


class NotFound(ClientError):
    pass


class OriginNotFound(NotFound):
    pass


class TagNotFound(NotFound):
    pass


class CookingFailed(ClientError):
    pass


class DeadlineExceeded(ClientError):
    def __init__(self, message, last_status=None):
        super().__init__(message)
        self.last_status = last_status


class Rejected(ClientError):
    pass


@dataclass
class TransportResponse:
    status: int
    body: bytes = b""
    headers: dict = field(default_factory=dict)


class HttpTransport:
    """Production transport; redirects are left to the client."""

    def __init__(self, timeout: float = 60.0):
        import requests

        self.session = requests.Session()
        self.timeout = timeout

    def request(self, method, url, body=None, headers=None):
        import requests

        try:
            resp = self.session.request(
                method,
                url,
                data=body,
                headers=headers or {},
                timeout=self.timeout,
                allow_redirects=False,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        return TransportResponse(resp.status_code, resp.content, dict(resp.headers))


class RefusingTransport:
    """Offline mode: any network attempt is a hard error."""

    def request(self, method, url, body=None, headers=None):
        raise TransportError(f"offline mode forbids {method} {url}")


@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 1.0  # exponential: 1s, 2s, 4s, ...


@dataclass
class RateBudget:
    requests: int
    window: float  # seconds


@dataclass
class ArchiveEndpoint:
    base_url: str = "https://archive.softwareheritage.org/api/1"
    auth_token: str | None = None
    rate_budget: RateBudget | None = None
    retry_policy: RetryPolicy = field(default_factory=RetryPolicy)


class ArchiveClient:
    """One instance is safe to share across workers; the rate budget and
    retry bookkeeping are synchronized internally."""

    def __init__(self, endpoint: ArchiveEndpoint, transport, clock=time.monotonic,
                 sleep=time.sleep):
        self.endpoint = endpoint
        self.transport = transport
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._window_start = None
        self._window_count = 0

    # -- plumbing ----------------------------------------------------------

    def _throttle(self):
        budget = self.endpoint.rate_budget
        if budget is None:
            return
        with self._lock:
            now = self._clock()
            if self._window_start is None or now - self._window_start >= budget.window:
                self._window_start = now
                self._window_count = 0
            if self._window_count >= budget.requests:
                wait = budget.window - (now - self._window_start)
                if wait > 0:
                    self._sleep(wait)
                self._window_start = self._clock()
                self._window_count = 0
            self._window_count += 1

    def _headers(self):
        headers = {"Accept": "application/json"}
        if self.endpoint.auth_token:
            headers["Authorization"] = f"Bearer {self.endpoint.auth_token}"
        return headers

    def _request(self, method, url, body=None, retry_idempotent=True):
        policy = self.endpoint.retry_policy
        attempts = policy.attempts if retry_idempotent else 1
        last_exc = None
        for attempt in range(attempts):
            if attempt:
                self._sleep(policy.base_delay * (2 ** (attempt - 1)))
            self._throttle()
            try:
                response = self.transport.request(
                    method, url, body=body, headers=self._headers()
                )
            except TransportError as exc:
                last_exc = exc
                continue
            if response.status == 429:
                last_exc = RateLimited(f"rate limited on {url}")
                continue
            if response.status == 401:
                raise AuthRequired(f"HTTP {response.status} on {url}")
            if response.status >= 500:
                last_exc = TransportError(f"HTTP {response.status} on {url}")
                continue
            return response
        raise last_exc

    def _get_json(self, url):
        response = self._request("GET", url)
        if response.status == 404:
            raise NotFound(f"HTTP 404 on {url}")
        if response.status == 403:
            raise AuthRequired(f"HTTP 403 on {url}")
        if response.status >= 400:
            raise TransportError(f"HTTP {response.status} on {url}")
        try:
            return json.loads(response.body)
        except (ValueError, UnicodeDecodeError) as exc:
            raise TransportError(f"undecodable response from {url}: {exc}") from exc

    def _url(self, key, **kwargs) -> str:
        path = ENDPOINTS[key].format(
            **{k: urllib.parse.quote(str(v), safe=":/") for k, v in kwargs.items()}
        )
        return f"{self.endpoint.base_url.rstrip('/')}/{path}"

    # -- operations ----------------------------------------------------------

    def known(self, ids: list) -> dict:
        """Bulk existence query; chunked to the endpoint's batch limit."""
        if not ids:
            raise ValueError("known() requires a non-empty id list")
        result = {}
        url = self._url("known")
        for start in range(0, len(ids), KNOWN_CHUNK):
            chunk = ids[start : start + KNOWN_CHUNK]
            body = json.dumps([format_swhid(i) for i in chunk]).encode()
            response = self._request("POST", url, body=body, retry_idempotent=True)
            if response.status >= 400:
                raise TransportError(f"HTTP {response.status} on {url}")
            try:
                payload = json.loads(response.body)
            except ValueError as exc:
                raise TransportError(f"undecodable known response: {exc}") from exc
            for swhid in chunk:
                entry = payload.get(format_swhid(swhid))
                if entry is None or "known" not in entry:
                    raise TransportError(
                        f"known response lacks entry for {format_swhid(swhid)}"
                    )
                result[swhid] = bool(entry["known"])
        return result

    def resolve_extid_nar_sha256(self, digest: nar.NarDigest) -> Swhid:
        url = self._url("extid_nar_sha256", hex=digest.hex)
        payload = self._get_json(url)
        target = payload.get("target")
        if not isinstance(target, str):
            raise TransportError(f"extid response from {url} lacks a target")
        try:
            swhid = parse_swhid(target)
        except ToolError as exc:
            raise TransportError(f"bad target in extid response: {exc}") from exc
        return swhid

    def lookup_revision(self, commit_sha1: bytes) -> tuple[Swhid, Swhid]:
        url = self._url("revision", hex=commit_sha1.hex())
        payload = self._get_json(url)
        directory = payload.get("directory")
        if not isinstance(directory, str):
            raise TransportError(f"revision response from {url} lacks a directory")
        try:
            root = Swhid("dir", bytes.fromhex(directory))
        except (ValueError, ToolError) as exc:
            raise TransportError(f"bad directory id: {exc}") from exc
        return Swhid("rev", commit_sha1), root

    def lookup_origin_tag(self, origin_url: str, tag_name: str) -> bytes:
        try:
            visit = self._get_json(self._url("origin_visit_latest", url=origin_url))
        except NotFound:
            raise OriginNotFound(f"origin {origin_url!r} not archived") from None
        snapshot = visit.get("snapshot")
        if not isinstance(snapshot, str):
            raise TransportError("latest visit carries no snapshot")
        payload = self._get_json(self._url("snapshot", hex=snapshot))
        branches = payload.get("branches") or {}
        branch = branches.get(f"refs/tags/{tag_name}")
        if branch is None:
            raise TagNotFound(f"tag {tag_name!r} not in latest snapshot of {origin_url}")
        target_type, target = branch.get("target_type"), branch.get("target")
        if target_type == "release":
            release = self._get_json(self._url("release", hex=target))
            target_type, target = release.get("target_type"), release.get("target")
        if target_type != "revision" or not isinstance(target, str):
            raise TransportError(f"tag {tag_name!r} does not resolve to a revision")
        return bytes.fromhex(target)

    def _fetch_following_redirects(self, url: str) -> bytes:
        for _ in range(MAX_REDIRECTS):
            response = self._request("GET", url)
            if response.status in (301, 302, 303, 307, 308):
                location = response.headers.get("Location")
                if not location:
                    raise TransportError(f"redirect from {url} without Location")
                url = urllib.parse.urljoin(url, location)
                continue
            if response.status != 200:
                raise TransportError(f"HTTP {response.status} fetching {url}")
            return response.body
        raise TransportError(f"more than {MAX_REDIRECTS} redirects fetching {url}")

    def vault_fetch(self, target: Swhid, poll_interval: float = 5.0,
                    deadline: float = 3600.0) -> nar.NarNode:
        """Request cooking if needed, poll until done, download and unpack."""
        if deadline <= 0:
            raise ValueError("deadline must be positive")
        url = self._url("vault_flat", swhid=format_swhid(target))
        start = self._clock()
        status = None
        first = True
        while True:
            try:
                payload = self._get_json(url)
            except NotFound:
                if not first:
                    raise
                response = self._request("POST", url, retry_idempotent=False)
                if response.status >= 400:
                    raise TransportError(
                        f"cooking request failed with HTTP {response.status}"
                    ) from None
                payload = json.loads(response.body) if response.body else {}
            first = False
            status = payload.get("status")
            if status == "done":
                fetch_url = payload.get("fetch_url")
                if not fetch_url:
                    raise TransportError("done vault job without fetch_url")
                bundle = self._fetch_following_redirects(fetch_url)
                return _unpack_bundle(bundle)
            if status == "failed":
                raise CookingFailed(payload.get("progress_message") or "cooking failed")
            if self._clock() - start >= deadline:
                raise DeadlineExceeded(
                    f"vault job still {status!r} after deadline", last_status=status
                )
            self._sleep(poll_interval)

    def save_code_now(self, origin_url: str, visit_type: str) -> "SaveRequest":
        if visit_type not in ("git", "svn", "hg"):
            raise ValueError(
                f"save requests take VCS origins only, not {visit_type!r}"
            )
        url = self._url("save_origin", visit_type=visit_type, url=origin_url)
        response = self._request("POST", url, retry_idempotent=False)
        if response.status in (400, 403):
            raise Rejected(f"save request for {origin_url!r} rejected")
        if response.status >= 400:
            raise TransportError(f"HTTP {response.status} on {url}")
        try:
            payload = json.loads(response.body)
        except ValueError as exc:
            raise TransportError(f"undecodable save response: {exc}") from exc
        status = payload.get("save_request_status", "pending")
        return SaveRequest(origin_url=origin_url, visit_type=visit_type, status=status)


@dataclass
class SaveRequest:
    origin_url: str
    visit_type: str
    status: str  # accepted | rejected | pending | succeeded | failed


@dataclass
class VaultJob:
    target: Swhid
    flavor: str = "flat"
    status: str = "new"
    fetch_url: str | None = None


def _unpack_bundle(bundle: bytes) -> nar.NarNode:
    """Unpack a flat vault bundle (tar, possibly gzipped) into a nar tree,
    stripping the single top-level directory the bundle wraps."""
    try:
        tf = tarfile.open(fileobj=io.BytesIO(bundle), mode="r:*")
    except tarfile.TarError as exc:
        raise TransportError(f"unreadable vault bundle: {exc}") from exc
    root = nar.Directory()
    with tf:
        for info in tf:
            parts = [p.encode() for p in info.name.split("/") if p not in ("", ".")]
            if not parts:
                continue
            cur = root
            for part in parts[:-1]:
                child = cur.entries.get(part)
                if not isinstance(child, nar.Directory):
                    child = nar.Directory()
                    cur.entries[part] = child
                cur = child
            leaf = parts[-1]
            if info.isdir():
                cur.entries.setdefault(leaf, nar.Directory())
            elif info.issym():
                cur.entries[leaf] = nar.Symlink(info.linkname.encode())
            elif info.isfile():
                fh = tf.extractfile(info)
                data = fh.read() if fh else b""
                cur.entries[leaf] = nar.Regular(
                    data, executable=bool(info.mode & 0o111)
                )
    top = list(root.entries.items())
    if len(top) == 1 and isinstance(top[0][1], nar.Directory):
        return top[0][1]
    return root

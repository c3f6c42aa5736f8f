import io
import json
import os
import random
import subprocess
import tarfile

import pytest

from srcrecover import heritage, nar

WORDS = [
    "src", "lib", "doc", "main", "util", "test", "build", "core",
    "data", "conf", "init", "readme", "extra", "vendor", "include",
]


def random_name(rng, long=False):
    parts = [rng.choice(WORDS) + str(rng.randrange(100)) for _ in range(rng.randrange(1, 3))]
    name = "-".join(parts)
    if long:
        name += "-" + "x" * rng.randrange(120, 180)
    return name


def make_random_tree(root, rng, files=5, depth=2, long_names=False, symlinks=True):
    """Populate ``root`` with a random directory tree; returns nothing."""
    os.makedirs(root, exist_ok=True)
    dirs = [root]
    for _ in range(rng.randrange(0, depth + 1)):
        parent = rng.choice(dirs)
        d = os.path.join(parent, random_name(rng, long=long_names and rng.random() < 0.2))
        os.makedirs(d, exist_ok=True)
        dirs.append(d)
    created = []
    for _ in range(files):
        parent = rng.choice(dirs)
        path = os.path.join(
            parent, random_name(rng, long=long_names and rng.random() < 0.2)
        )
        if os.path.exists(path):
            continue
        data = rng.randbytes(rng.randrange(0, 4096))
        with open(path, "wb") as fh:
            fh.write(data)
        if rng.random() < 0.3:
            os.chmod(path, 0o755)
        os.utime(path, (rng.randrange(2**30), rng.randrange(2**30)))
        created.append(path)
    if symlinks and created and rng.random() < 0.6:
        parent = rng.choice(dirs)
        link = os.path.join(parent, "link-" + random_name(rng))
        if not os.path.exists(link):
            os.symlink(os.path.basename(created[0]), link)


def system_tar(directory, member, fmt="gnu", owner=None, mtime=None):
    """Create a tar stream with GNU tar (the independent producer)."""
    cmd = ["tar", "--format=" + fmt, "-C", directory, "-cf", "-", member]
    if owner is not None:
        cmd[1:1] = [f"--owner={owner}", f"--group={owner}"]
    if mtime is not None:
        cmd[1:1] = [f"--mtime=@{mtime}", "--clamp-mtime"]
    out = subprocess.run(cmd, capture_output=True)
    assert out.returncode == 0, out.stderr
    return out.stdout


def python_tar(tree_root, arcname, fmt=tarfile.GNU_FORMAT):
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=fmt) as tf:
        tf.add(tree_root, arcname=arcname)
    return buf.getvalue()


class ScriptedTransport:
    """In-memory transport: routes map "METHOD url" to responses.

    A route value may be a TransportResponse, a (status, body) tuple, a dict
    (sent as JSON), or a list of any of those to script successive calls.
    Records every request for counting assertions.
    """

    def __init__(self, routes=None):
        self.routes = dict(routes or {})
        self.requests = []

    def add(self, method, url, response):
        self.routes[f"{method} {url}"] = response

    def request(self, method, url, body=None, headers=None):
        self.requests.append((method, url, body))
        key = f"{method} {url}"
        entry = self.routes.get(key)
        if entry is None:
            return heritage.TransportResponse(404, b"")
        if isinstance(entry, list):
            entry = entry.pop(0) if len(entry) > 1 else entry[0]
        return self._coerce(entry)

    @staticmethod
    def _coerce(entry):
        if isinstance(entry, heritage.TransportResponse):
            return entry
        if isinstance(entry, tuple):
            status, body = entry
            if isinstance(body, dict):
                body = json.dumps(body).encode()
            return heritage.TransportResponse(status, body)
        if isinstance(entry, dict):
            return heritage.TransportResponse(200, json.dumps(entry).encode())
        if isinstance(entry, bytes):
            return heritage.TransportResponse(200, entry)
        raise TypeError(f"cannot coerce {entry!r}")


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now += seconds


def make_client(transport, base="https://swh.test/api/1", clock=None, budget=None):
    endpoint = heritage.ArchiveEndpoint(
        base_url=base,
        rate_budget=budget,
        retry_policy=heritage.RetryPolicy(attempts=3, base_delay=0.0),
    )
    clock = clock or FakeClock()
    return heritage.ArchiveClient(endpoint, transport, clock=clock, sleep=clock.sleep)


def tree_to_tar_bundle(tree, root_name="bundle"):
    """Serialize a nar tree as the tar bundle a vault download returns."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w:gz") as tf:

        def add(node, path):
            if isinstance(node, nar.Directory):
                info = tarfile.TarInfo(path)
                info.type = tarfile.DIRTYPE
                info.mode = 0o755
                tf.addfile(info)
                for name, child in sorted(node.entries.items()):
                    add(child, path + "/" + name.decode())
            elif isinstance(node, nar.Regular):
                info = tarfile.TarInfo(path)
                info.size = len(node.contents)
                info.mode = 0o755 if node.executable else 0o644
                tf.addfile(info, io.BytesIO(node.contents))
            else:
                info = tarfile.TarInfo(path)
                info.type = tarfile.SYMTYPE
                info.linkname = node.target.decode()
                tf.addfile(info)

        add(tree, root_name)
    return buf.getvalue()


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

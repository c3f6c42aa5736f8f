"""Command-line entry point.

Subcommands: disassemble, assemble, nar-hash, swhid, resolve,
lint-archival, emit-manifest, audit.  Machine-readable output goes to
stdout (optionally as one JSON document with --json), diagnostics to
stderr.  Exit codes: 0 success, 1 operational failure, 2 usage error.

Configuration precedence is flags > environment.  Environment variables:
SRCRECOVER_SWH_URL, SRCRECOVER_SWH_TOKEN, SRCRECOVER_DB_URL.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys

from . import audit as audit_mod
from . import disarchive, heritage, nar, resolver
from .errors import ToolError
from .swhid import format_swhid, swhid_for_content, swhid_for_directory

DEFAULT_DB_URL = "https://disarchive.guix.gnu.org"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srcrecover",
        description="Disassemble/reassemble source tarballs, compute source"
        " identifiers, recover missing sources, and audit manifests.",
    )
    parser.add_argument("--swh-url", default=None, help="archive API base URL")
    parser.add_argument("--db-url", default=None, help="description database URL")
    parser.add_argument("--token", default=None, help="archive API bearer token")
    parser.add_argument("--timeout", type=float, default=60.0)
    parser.add_argument("--parallelism", type=int, default=8)
    parser.add_argument(
        "--offline", action="store_true",
        help="forbid all real network access (any attempt is an error)",
    )
    parser.add_argument("--json", action="store_true", dest="as_json",
                        help="render results as one JSON document on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("disassemble", help="split a tarball into a description"
                       " and its content tree")
    p.add_argument("file")
    p.add_argument("-o", "--output", help="description output path")
    p.add_argument("--content-out", help="directory to write the content tree to")

    p = sub.add_parser("assemble", help="rebuild a file from its description")
    p.add_argument("description")
    p.add_argument("-o", "--output", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--content-dir", help="directory holding the content tree")
    group.add_argument("--swh", action="store_true",
                       help="fetch content from the archive vault")

    p = sub.add_parser("nar-hash", help="print the normalized-archive hash of a path")
    p.add_argument("path")
    p.add_argument("--checkout", action="store_true",
                   help="exclude VCS bookkeeping directories")

    p = sub.add_parser("swhid", help="print the cnt or dir SWHID of a path")
    p.add_argument("path")

    p = sub.add_parser("resolve", help="recover one source through the fallback ladder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--source", required=True, help="index or URL of the source")
    p.add_argument("--offline-mocks", help="directory of scripted transport responses")
    p.add_argument("-o", "--output", help="where to write recovered file bytes")

    p = sub.add_parser("lint-archival", help="report archival status per source")
    p.add_argument("--manifest", required=True)
    p.add_argument("--offline-mocks")

    p = sub.add_parser("emit-manifest", help="canonicalize a sources manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("-o", "--output")

    p = sub.add_parser("audit", help="link-rot / coverage / census / impact reports")
    p.add_argument("mode", choices=["rot", "coverage", "census", "impact"])
    p.add_argument("--manifest")
    p.add_argument("--snapshot-label", default="")
    p.add_argument("--edges", help="dependent,dependency CSV (impact mode)")
    p.add_argument("--offline-mocks")
    p.add_argument("--out", required=True, help="CSV output path")
    return parser


def _transport(args):
    if args.offline:
        return heritage.RefusingTransport()
    mocks = getattr(args, "offline_mocks", None)
    if mocks:
        return FileBackedTransport(mocks)
    return heritage.HttpTransport(timeout=args.timeout)


def _client(args):
    endpoint = heritage.ArchiveEndpoint(
        base_url=args.swh_url
        or os.environ.get("SRCRECOVER_SWH_URL")
        or heritage.ArchiveEndpoint.base_url,
        auth_token=args.token or os.environ.get("SRCRECOVER_SWH_TOKEN"),
    )
    return heritage.ArchiveClient(endpoint, _transport(args))


def _db(args):
    url = args.db_url or os.environ.get("SRCRECOVER_DB_URL") or DEFAULT_DB_URL
    if os.path.isdir(url):
        return disarchive.LocalDescriptionDb(url)
    return disarchive.RemoteDescriptionDb(url, _transport(args))


class FileBackedTransport:
    """Offline transport reading responses from <dir>/transport.json:
    {"<METHOD> <url>": {"status": 200, "body_b64": "..."}}."""

    def __init__(self, directory):
        path = os.path.join(directory, "transport.json")
        with open(path, "r", encoding="utf-8") as fh:
            self.routes = json.load(fh)

    def request(self, method, url, body=None, headers=None):
        entry = self.routes.get(f"{method} {url}")
        if entry is None:
            return heritage.TransportResponse(404, b"")
        return heritage.TransportResponse(
            entry.get("status", 200),
            base64.b64decode(entry.get("body_b64", "")),
            entry.get("headers", {}),
        )


class FileBackedFetcher(resolver.UpstreamFetcher):
    """Offline upstream fetcher: <dir>/files/<percent-encoded-url>."""

    def __init__(self, directory):
        self.directory = os.path.join(directory, "files")

    def fetch_url(self, url):
        import urllib.parse

        path = os.path.join(self.directory, urllib.parse.quote(url, safe=""))
        if not os.path.isfile(path):
            raise resolver.ResolverError(f"no offline copy of {url}")
        with open(path, "rb") as fh:
            return fh.read()


class HttpFetcher(resolver.UpstreamFetcher):
    def __init__(self, timeout):
        self.timeout = timeout

    def fetch_url(self, url):
        import requests

        try:
            resp = requests.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise resolver.ResolverError(str(exc)) from exc
        if resp.status_code != 200:
            raise resolver.ResolverError(f"HTTP {resp.status_code} on {url}")
        return resp.content


def _fetcher(args):
    mocks = getattr(args, "offline_mocks", None)
    if mocks:
        return FileBackedFetcher(mocks)
    if args.offline:
        return resolver.UpstreamFetcher()  # every fetch fails
    return HttpFetcher(args.timeout)


def _emit(args, human: str, payload: dict) -> None:
    if args.as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(human)


def _load_manifest(path):
    with open(path, "rb") as fh:
        return resolver.parse_sources_manifest(fh.read())


def _cmd_disassemble(args) -> int:
    with open(args.file, "rb") as fh:
        data = fh.read()
    desc, content = disarchive.disassemble(data, os.path.basename(args.file))
    text = disarchive.write_description(desc)
    out_path = args.output or args.file + ".sexp"
    with open(out_path, "wb") as fh:
        fh.write(text)
    if args.content_out is not None:
        if isinstance(content, bytes):
            os.makedirs(args.content_out, exist_ok=True)
            name = os.path.basename(args.file)
            with open(os.path.join(args.content_out, name), "wb") as fh:
                fh.write(content)
        else:
            root = desc.root
            while not isinstance(root, (disarchive.DirectoryRef, disarchive.ContentRef)):
                root = root.input
            name = root.name.decode("utf-8", "surrogateescape")
            nar.tree_to_disk(content, os.path.join(args.content_out, name))
    _emit(args, out_path, {"description": out_path})
    return 0


def _cmd_assemble(args) -> int:
    with open(args.description, "rb") as fh:
        desc = disarchive.read_description(fh.read())
    if args.content_dir:
        provider = disarchive.DiskProvider(args.content_dir)
    else:
        provider = resolver.VaultContentProvider(_client(args))
    data = disarchive.assemble(desc, provider)
    with open(args.output, "wb") as fh:
        fh.write(data)
    _emit(args, args.output, {"output": args.output, "bytes": len(data)})
    return 0


def _cmd_nar_hash(args) -> int:
    tree = nar.tree_from_disk(args.path, exclude_vcs=args.checkout)
    digest = nar.nar_hash(tree)
    _emit(
        args,
        f"{digest.base32}\n{digest.hex}",
        {"base32": digest.base32, "hex": digest.hex},
    )
    return 0


def _cmd_swhid(args) -> int:
    if os.path.isdir(args.path):
        swhid = swhid_for_directory(args.path)
    else:
        with open(args.path, "rb") as fh:
            swhid = swhid_for_content(fh.read())
    _emit(args, format_swhid(swhid), {"swhid": format_swhid(swhid)})
    return 0


def _select_record(records, selector):
    if selector.isdigit():
        index = int(selector)
        if index >= len(records):
            raise resolver.ResolverError(f"manifest has no source index {index}")
        return records[index]
    for record in records:
        if selector in record.urls:
            return record
    raise resolver.ResolverError(f"manifest has no source with URL {selector!r}")


def _cmd_resolve(args) -> int:
    records = _load_manifest(args.manifest)
    record = _select_record(records, args.source)
    resolution = resolver.resolve(record, _client(args), _db(args), _fetcher(args))
    out_path = args.output
    if isinstance(resolution.outcome, bytes):
        out_path = out_path or os.path.basename(record.urls[0])
        with open(out_path, "wb") as fh:
            fh.write(resolution.outcome)
    else:
        out_path = out_path or "checkout"
        nar.tree_to_disk(resolution.outcome, out_path)
    _emit(
        args,
        f"{resolution.provenance} {out_path}",
        {"provenance": resolution.provenance, "output": out_path},
    )
    return 0


def _cmd_lint_archival(args) -> int:
    records = _load_manifest(args.manifest)
    client = _client(args)
    results = []
    for index, record in enumerate(records):
        status = resolver.check_archival(record, client)
        results.append(
            {
                "index": index,
                "url": record.urls[0],
                "status": status.status,
                "save_request": status.save_request.status if status.save_request else None,
                "note": status.note,
            }
        )
    human = "\n".join(
        f"{r['index']}\t{r['status']}\t{r['url']}"
        + (f"\t(save: {r['save_request']})" if r["save_request"] else "")
        for r in results
    )
    _emit(args, human, {"records": results})
    return 0


def _cmd_emit_manifest(args) -> int:
    records = _load_manifest(args.manifest)
    data = resolver.emit_sources_manifest(records)
    if args.output:
        with open(args.output, "wb") as fh:
            fh.write(data)
        _emit(args, args.output, {"output": args.output})
    else:
        sys.stdout.buffer.write(data)
    return 0


def _read_edges(path):
    import csv as csv_mod

    edges = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv_mod.reader(fh):
            if not row or row[0].startswith("#") or row[:2] == ["dependent", "dependency"]:
                continue
            edges.append((row[0], row[1]))
    return edges


def _cmd_audit(args) -> int:
    if args.mode == "impact":
        if not args.edges:
            raise resolver.ResolverError("impact mode needs --edges")
        edges = _read_edges(args.edges)
        packages = sorted({p for edge in edges for p in edge})
        ranks = audit_mod.impact_rank(packages, edges)
        output = audit_mod.impact_csv(ranks)
    else:
        records = _load_manifest(args.manifest)
        label = args.snapshot_label
        if args.mode == "census":
            report = audit_mod.census(records, label=label)
            output = (
                audit_mod.census_high_csv([report])
                + audit_mod.census_vcs_csv([report])
                + audit_mod.census_download_csv([report])
            )
        elif args.mode == "rot":
            audits = audit_mod.run_rot_audit(
                records, _fetcher(args), label=label,
                parallelism=args.parallelism,
            )
            report = audit_mod.census(audits, label=label)
            output = audit_mod.rot_csv([report])
        else:  # coverage
            fetcher = _fetcher(args)
            audits = []
            for record in records:
                swhids = None
                try:
                    if record.method == "url-fetch":
                        artifact = fetcher.fetch_url(record.urls[0])
                    else:
                        artifact = fetcher.fetch_checkout(record, record.urls[0])
                    swhids = audit_mod.compute_swhids(record, artifact)
                except ToolError:
                    pass
                audits.append(audit_mod.AuditRecord(source=record, swhids=swhids,
                                                    snapshot_label=label))
            audit_mod.coverage(audits, _client(args))
            report = audit_mod.census(audits, label=label)
            output = audit_mod.coverage_csv([report])
    with open(args.out, "wb") as fh:
        fh.write(output)
    _emit(args, args.out, {"output": args.out})
    return 0


_COMMANDS = {
    "disassemble": _cmd_disassemble,
    "assemble": _cmd_assemble,
    "nar-hash": _cmd_nar_hash,
    "swhid": _cmd_swhid,
    "resolve": _cmd_resolve,
    "lint-archival": _cmd_lint_archival,
    "emit-manifest": _cmd_emit_manifest,
    "audit": _cmd_audit,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _COMMANDS[args.command](args)
    except ToolError as exc:
        print(f"srcrecover: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"srcrecover: error: {exc}", file=sys.stderr)
        return 1


def entry_point():
    raise SystemExit(main())

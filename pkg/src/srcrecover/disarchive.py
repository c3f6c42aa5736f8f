"""End-to-end disassembly/assembly pipeline.

disassemble() splits a tarball (optionally behind one gzip/bzip2/xz layer)
into a Description and a content tree; assemble() reverses the split and
refuses to emit bytes that fail any recorded digest.  Descriptions
serialize to the canonical s-expression format and can be stored in or
fetched from a description database keyed by the outer SHA-256.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

from . import compress_codec, nar, sexpr, tar_codec
from .compress_codec import GzipHeader, NoMatchingCompressor, UnknownFormat
from .errors import ToolError
from .swhid import Swhid, format_swhid, parse_swhid, swhid_for_content, swhid_for_directory
from .tar_codec import TarballSpec, TarMember, UnsupportedMemberType

FORMAT_VERSION = 0


class DisarchiveError(ToolError):
    pass


class ContentUnavailable(DisarchiveError):
    pass


class ContentDigestMismatch(DisarchiveError):
    pass


class ReconstructionMismatch(DisarchiveError):
    pass


class NotFound(DisarchiveError):
    pass


class MalformedDescription(DisarchiveError):
    pass


@dataclass
class DirectoryRef:
    name: bytes
    addresses: list  # of dir Swhid; we emit one, any may serve retrieval
    digest_nar_sha256: nar.NarDigest
    version: int = 0


@dataclass
class ContentRef:
    """Reference to a bare file (a patch, say) instead of a directory."""

    name: bytes
    addresses: list  # of cnt Swhid
    digest_sha256: bytes
    version: int = 0


@dataclass
class TarballLayer:
    spec: TarballSpec
    input: object  # DirectoryRef


@dataclass
class GzipLayer:
    name: bytes
    digest_sha256: bytes
    header: GzipHeader
    crc: int
    isize: int
    compressor: str
    input: object  # TarballLayer or ContentRef


@dataclass
class Bzip2Layer:
    name: bytes
    digest_sha256: bytes
    compressor: str
    input: object


@dataclass
class XzLayer:
    name: bytes
    digest_sha256: bytes
    compressor: str
    check: str
    input: object


@dataclass
class Description:
    root: object  # compression layer, TarballLayer, or ContentRef
    version: int = FORMAT_VERSION

    @property
    def outer_sha256(self) -> bytes:
        root = self.root
        if isinstance(root, TarballLayer):
            return root.spec.digest_sha256
        if isinstance(root, ContentRef):
            return root.digest_sha256
        return root.digest_sha256


def looks_like_tar(data: bytes) -> bool:
    if len(data) < tar_codec.BLOCK or len(data) % tar_codec.BLOCK:
        return False
    block = data[: tar_codec.BLOCK]
    if block == b"\0" * tar_codec.BLOCK:
        return not data.strip(b"\0")  # bare end-of-archive padding
    try:
        fields = tar_codec.decode_header(block)
    except ToolError:
        return False
    return tar_codec.compute_checksum(block) == fields.chksum


def _strip_dot(path: bytes) -> bytes:
    while path.startswith(b"./"):
        path = path[2:]
    return path.rstrip(b"/")


def extract_tree(spec: TarballSpec, content: dict) -> tuple[bytes, nar.Directory]:
    """Build the file-system tree a tarball unpacks to.

    Returns (root name, tree).  When every member lives under one top-level
    directory, the tree is that directory's subtree and the root name is its
    name; otherwise the root name is the archive name and paths map directly.
    """
    root = nar.Directory()

    def place(path: bytes, node, index: int):
        parts = [p for p in path.split(b"/") if p and p != b"."]
        if not parts:
            return
        cur = root
        for part in parts[:-1]:
            child = cur.entries.get(part)
            if not isinstance(child, nar.Directory):
                child = nar.Directory()
                cur.entries[part] = child
            cur = child
        leaf = parts[-1]
        if isinstance(node, nar.Directory) and isinstance(
            cur.entries.get(leaf), nar.Directory
        ):
            return  # repeated directory entry
        cur.entries[leaf] = node

    for index, member in enumerate(spec.members):
        if member.inline_data is not None:
            continue  # metadata members never enter the tree
        fields = tar_codec._member_fields(spec, member)
        key = _strip_dot(member.key)
        tf = fields.typeflag
        if tf in tar_codec.REGULAR_TYPEFLAGS:
            data = content.get(member.key, b"") if fields.size else b""
            place(key, nar.Regular(data, executable=bool(fields.mode & 0o111)), index)
        elif tf == ord("5"):
            place(key, nar.Directory(), index)
        elif tf == ord("2"):
            place(key, nar.Symlink(fields.linkname), index)
        elif tf == ord("1"):
            target = nar.tree_lookup(root, _strip_dot(fields.linkname))
            if isinstance(target, nar.Regular):
                node = nar.Regular(target.contents, target.executable)
            else:
                node = nar.Regular(b"")
            place(key, node, index)
        else:
            raise UnsupportedMemberType(
                f"member {index} ({member.key!r}) has typeflag {tf} with no"
                " file-system representation",
                index,
            )

    top = list(root.entries.items())
    if len(top) == 1 and isinstance(top[0][1], nar.Directory):
        return top[0][0], top[0][1]
    name = _default_root_name(spec.name)
    return name, root


def _default_root_name(archive_name: bytes) -> bytes:
    name = os.path.basename(archive_name)
    for suffix in (b".tar.gz", b".tgz", b".tar.bz2", b".tbz2", b".tar.xz",
                   b".txz", b".tar", b".gz", b".bz2", b".xz"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def _member_content_path(root_name: bytes, key: bytes) -> bytes:
    key = _strip_dot(key)
    if key == root_name:
        return b""
    if key.startswith(root_name + b"/"):
        return key[len(root_name) + 1 :]
    return key


def disassemble(data: bytes, name) -> tuple[Description, object]:
    """Disassemble ``data`` into (Description, content).

    content is a nar tree for tar inputs or raw bytes for bare files.
    """
    if isinstance(name, str):
        name = name.encode("utf-8")
    stream = compress_codec.decompress(data)

    if stream.format == "gzip" and len(stream.gzip_members) != 1:
        raise UnsupportedMemberType(
            "multi-member gzip streams are not representable as a description", 0
        )

    payload = stream.payload
    inner_name = name
    if stream.format != "plain":
        inner_name = _strip_compression_suffix(name, stream.format)

    if looks_like_tar(payload):
        spec, content_map = tar_codec.parse_tarball(payload, inner_name)
        root_name, tree = extract_tree(spec, content_map)
        ref = DirectoryRef(
            name=root_name,
            addresses=[swhid_for_directory(tree)],
            digest_nar_sha256=nar.nar_hash(tree),
        )
        inner = TarballLayer(spec=spec, input=ref)
        content = tree
    else:
        ref = ContentRef(
            name=inner_name,
            addresses=[swhid_for_content(payload)],
            digest_sha256=hashlib.sha256(payload).digest(),
        )
        inner = ref
        content = payload

    if stream.format == "plain":
        return Description(root=inner), content

    digest = hashlib.sha256(data).digest()
    if stream.format == "gzip":
        member = stream.gzip_members[0]
        entry = compress_codec.guess_compressor(payload, data)
        root = GzipLayer(
            name=name,
            digest_sha256=digest,
            header=member.header,
            crc=member.crc,
            isize=member.isize,
            compressor=entry.name,
            input=inner,
        )
    elif stream.format == "bzip2":
        entry = compress_codec.guess_compressor(payload, data)
        root = Bzip2Layer(name, digest, entry.name, inner)
    else:
        entry = compress_codec.guess_compressor(payload, data)
        root = XzLayer(name, digest, entry.name, stream.xz_check, inner)
    return Description(root=root), content


def _strip_compression_suffix(name: bytes, fmt: str) -> bytes:
    suffixes = {
        "gzip": (b".gz", b".tgz"),
        "bzip2": (b".bz2", b".tbz2"),
        "xz": (b".xz", b".txz"),
    }[fmt]
    if name.endswith(b".tgz"):
        return name[:-4] + b".tar"
    if name.endswith(b".tbz2"):
        return name[:-5] + b".tar"
    if name.endswith(b".txz"):
        return name[:-4] + b".tar"
    for s in suffixes:
        if name.endswith(s):
            return name[: -len(s)]
    return name


class ContentProvider:
    """Supplies the content a description points at.

    Implementations resolve a DirectoryRef to a nar tree and a ContentRef to
    raw bytes, raising ContentUnavailable when they cannot.
    """

    def get_tree(self, ref: DirectoryRef):
        raise ContentUnavailable(f"no tree for {ref.name!r}")

    def get_file(self, ref: ContentRef) -> bytes:
        raise ContentUnavailable(f"no file for {ref.name!r}")


class TreeProvider(ContentProvider):
    def __init__(self, tree=None, files=None):
        self.tree = tree
        self.files = files or {}

    def get_tree(self, ref):
        if self.tree is None:
            raise ContentUnavailable(f"no tree for {ref.name!r}")
        return self.tree

    def get_file(self, ref):
        if ref.name in self.files:
            return self.files[ref.name]
        raise ContentUnavailable(f"no file for {ref.name!r}")


class DiskProvider(ContentProvider):
    """Serves content from a directory: either DIR itself is the tree or
    DIR/<ref name> is."""

    def __init__(self, path):
        self.path = os.fspath(path)

    def get_tree(self, ref):
        name = ref.name.decode("utf-8", "surrogateescape")
        candidate = os.path.join(self.path, name)
        target = candidate if os.path.isdir(candidate) else self.path
        if not os.path.isdir(target):
            raise ContentUnavailable(f"no tree for {ref.name!r} under {self.path}")
        return nar.tree_from_disk(target, exclude_vcs=True)

    def get_file(self, ref):
        candidate = os.path.join(
            self.path, os.path.basename(ref.name.decode("utf-8", "surrogateescape"))
        )
        if not os.path.isfile(candidate):
            raise ContentUnavailable(f"no file for {ref.name!r} under {self.path}")
        with open(candidate, "rb") as fh:
            return fh.read()


def _assemble_inner(layer, provider) -> bytes:
    if isinstance(layer, ContentRef):
        data = provider.get_file(layer)
        actual = hashlib.sha256(data).digest()
        if actual != layer.digest_sha256:
            raise ContentDigestMismatch(
                f"file content hashes to {actual.hex()},"
                f" expected {layer.digest_sha256.hex()}"
            )
        return data
    if isinstance(layer, TarballLayer):
        ref = layer.input
        tree = provider.get_tree(ref)
        actual = nar.nar_hash(tree)
        if actual != ref.digest_nar_sha256:
            raise ContentDigestMismatch(
                f"content tree nar-hashes to {actual.base32},"
                f" expected {ref.digest_nar_sha256.base32}"
            )
        content = {}
        for member in layer.spec.members:
            if member.inline_data is not None:
                continue
            fields = tar_codec._member_fields(layer.spec, member)
            if fields.typeflag in tar_codec.REGULAR_TYPEFLAGS and fields.size:
                node = nar.tree_lookup(tree, _member_content_path(ref.name, member.key))
                if not isinstance(node, nar.Regular):
                    raise ReconstructionMismatch(
                        f"verified tree lacks file for member {member.key!r}"
                    )
                content[member.key] = node.contents
        try:
            return tar_codec.serialize_tarball(layer.spec, content)
        except tar_codec.TarError as exc:
            raise ReconstructionMismatch(str(exc)) from exc
    raise MalformedDescription(f"unexpected layer {type(layer).__name__}")


def assemble(desc: Description, provider: ContentProvider) -> bytes:
    """Rebuild the original file; every digest on the chain must verify."""
    root = desc.root
    if isinstance(root, (ContentRef, TarballLayer)):
        return _assemble_inner(root, provider)
    payload = _assemble_inner(root.input, provider)
    if isinstance(root, GzipLayer):
        out = compress_codec.recompress(payload, root.compressor, header=root.header)
    elif isinstance(root, Bzip2Layer):
        out = compress_codec.recompress(payload, root.compressor)
    elif isinstance(root, XzLayer):
        out = compress_codec.recompress(payload, root.compressor, xz_check=root.check)
    else:
        raise MalformedDescription(f"unexpected root layer {type(root).__name__}")
    actual = hashlib.sha256(out).digest()
    if actual != root.digest_sha256:
        raise ReconstructionMismatch(
            f"assembled stream hashes to {actual.hex()},"
            f" expected {root.digest_sha256.hex()}"
        )
    return out


# --- s-expression schema -------------------------------------------------

_SYM = sexpr.Symbol


def _entry(name: str, *values) -> list:
    return [_SYM(name), *values]


def _header_fields_to_sexpr(values: dict) -> list:
    out = []
    for fname in tar_codec.DEFAULTABLE_FIELDS:
        value = values[fname]
        if fname == "chksum_trailer":
            out.append(_entry("chksum", _entry("trailer", value)))
        else:
            out.append(_entry(fname.replace("_", "-"), value))
    return out


def _member_to_sexpr(member: TarMember) -> list:
    item: list = [member.key]
    if "name" in member.fields:
        item.append(_entry("name", member.fields["name"]))
    for fname, value in member.fields.items():
        if fname == "name":
            continue
        if fname == "chksum_trailer":
            item.append(_entry("chksum-trailer", value))
        else:
            item.append(_entry(fname.replace("_", "-"), value))
    item.append(_entry("chksum", member.chksum))
    if member.inline_data is not None:
        item.append(_entry("data", member.inline_data))
    for fname, raw in sorted(member.raw_overrides.items()):
        item.append(_entry("raw", _entry(fname.replace("_", "-"), raw)))
    return item


def _tarball_to_sexpr(layer: TarballLayer) -> list:
    spec = layer.spec
    out = _entry(
        "tarball",
        _entry("name", spec.name),
        _entry("digest", _entry("sha256", spec.digest_sha256.hex().encode())),
        _entry("default-header", *_header_fields_to_sexpr(spec.default_header)),
        _entry("headers", *[_member_to_sexpr(m) for m in spec.members]),
        _entry("padding", spec.padding),
    )
    if spec.trailer:
        out.append(_entry("trailer", spec.trailer))
    out.append(_entry("input", _ref_to_sexpr(layer.input)))
    return out


def _ref_to_sexpr(ref) -> list:
    if isinstance(ref, DirectoryRef):
        kind, digest = "directory-ref", ref.digest_nar_sha256.hex.encode()
    elif isinstance(ref, ContentRef):
        kind, digest = "content-ref", ref.digest_sha256.hex().encode()
    else:
        raise MalformedDescription(f"unexpected ref {type(ref).__name__}")
    return _entry(
        kind,
        _entry("version", ref.version),
        _entry("name", ref.name),
        _entry("addresses", *[
            _entry("swhid", format_swhid(a).encode()) for a in ref.addresses
        ]),
        _entry("digest", _entry("sha256", digest)),
    )


def _layer_to_sexpr(layer) -> list:
    if isinstance(layer, TarballLayer):
        return _tarball_to_sexpr(layer)
    if isinstance(layer, ContentRef):
        return _ref_to_sexpr(layer)
    if isinstance(layer, GzipLayer):
        header = _entry(
            "header",
            _entry("mtime", layer.header.mtime),
            _entry("extra-flags", layer.header.extra_flags),
            _entry("os", layer.header.os),
        )
        if layer.header.flags:
            header.append(_entry("flags", layer.header.flags))
            for fname, key in (
                ("extra", "extra"),
                ("fname", "fname"),
                ("comment", "comment"),
                ("header_crc", "header-crc"),
            ):
                value = getattr(layer.header, fname)
                if value is not None:
                    header.append(_entry(key, value))
        return _entry(
            "gzip-member",
            _entry("name", layer.name),
            _entry("digest", _entry("sha256", layer.digest_sha256.hex().encode())),
            header,
            _entry("footer", _entry("crc", layer.crc), _entry("isize", layer.isize)),
            _entry("compressor", _SYM(layer.compressor)),
            _entry("input", _layer_to_sexpr(layer.input)),
        )
    if isinstance(layer, Bzip2Layer):
        return _entry(
            "bzip2-member",
            _entry("name", layer.name),
            _entry("digest", _entry("sha256", layer.digest_sha256.hex().encode())),
            _entry("compressor", _SYM(layer.compressor)),
            _entry("input", _layer_to_sexpr(layer.input)),
        )
    if isinstance(layer, XzLayer):
        return _entry(
            "xz-member",
            _entry("name", layer.name),
            _entry("digest", _entry("sha256", layer.digest_sha256.hex().encode())),
            _entry("compressor", _SYM(layer.compressor)),
            _entry("check", _SYM(layer.check)),
            _entry("input", _layer_to_sexpr(layer.input)),
        )
    raise MalformedDescription(f"unexpected layer {type(layer).__name__}")


def description_to_sexpr(desc: Description) -> list:
    return _entry("disarchive", _entry("version", desc.version), _layer_to_sexpr(desc.root))


def write_description(desc: Description) -> bytes:
    return sexpr.write_canonical(description_to_sexpr(desc)) + b"\n"


def _alist(items, what: str) -> dict:
    out = {}
    for item in items:
        if not isinstance(item, list) or not item or not isinstance(item[0], _SYM):
            raise MalformedDescription(f"malformed {what} entry: {item!r}")
        out.setdefault(str(item[0]), []).append(item[1:])
    return out


def _one(alist: dict, key: str, what: str):
    values = alist.get(key)
    if not values or len(values) != 1 or len(values[0]) != 1:
        raise MalformedDescription(f"{what} needs exactly one ({key} ...)")
    return values[0][0]


def _opt(alist: dict, key: str, default=None):
    values = alist.get(key)
    if not values:
        return default
    return values[0][0]


def _parse_digest(value, what: str) -> bytes:
    if not isinstance(value, list):
        raise MalformedDescription(f"bad digest in {what}")
    alist = _alist([value], what)
    hexstr = _one(alist, "sha256", what)
    try:
        return bytes.fromhex(hexstr.decode("ascii"))
    except (ValueError, UnicodeDecodeError, AttributeError):
        raise MalformedDescription(f"bad sha256 digest in {what}") from None


def _parse_ref(kind: str, items: list):
    alist = _alist(items, kind)
    version = _one(alist, "version", kind)
    name = _one(alist, "name", kind)
    addresses = []
    for addr_items in alist.get("addresses", [[]])[0:1]:
        for addr in addr_items:
            sub = _alist([addr], "addresses")
            text = _one(sub, "swhid", "addresses")
            try:
                addresses.append(parse_swhid(text.decode("ascii")))
            except (UnicodeDecodeError, ToolError) as exc:
                raise MalformedDescription(f"bad swhid: {exc}") from None
    if not addresses:
        raise MalformedDescription(f"{kind} needs at least one address")
    digest = _parse_digest(_one(alist, "digest", kind), kind)
    if kind == "directory-ref":
        return DirectoryRef(name, addresses, nar.NarDigest(digest), version)
    return ContentRef(name, addresses, digest, version)


def _parse_header_fields(items: list, into: dict, what: str) -> None:
    for item in items:
        if not isinstance(item, list) or not item:
            raise MalformedDescription(f"malformed field in {what}")
        key = str(item[0])
        if key == "chksum" and item[1:] and isinstance(item[1], list):
            sub = _alist(item[1:], "chksum")
            into["chksum_trailer"] = _one(sub, "trailer", "chksum")
        else:
            into[key.replace("-", "_")] = item[1]


def _parse_member(item: list) -> TarMember:
    if not item or not isinstance(item[0], (bytes, bytearray)):
        raise MalformedDescription(f"malformed member entry: {item!r}")
    member = TarMember(key=bytes(item[0]), fields={})
    for sub in item[1:]:
        if not isinstance(sub, list) or not sub:
            raise MalformedDescription(f"malformed member field: {sub!r}")
        key = str(sub[0])
        if key == "chksum":
            member.chksum = sub[1]
        elif key == "chksum-trailer":
            member.fields["chksum_trailer"] = sub[1]
        elif key == "data":
            member.inline_data = sub[1]
        elif key == "raw":
            inner = sub[1]
            member.raw_overrides[str(inner[0]).replace("-", "_")] = inner[1]
        else:
            member.fields[key.replace("-", "_")] = sub[1]
    return member


def _parse_tarball(items: list) -> TarballLayer:
    alist = _alist(items, "tarball")
    name = _one(alist, "name", "tarball")
    digest = _parse_digest(_one(alist, "digest", "tarball"), "tarball")
    default: dict = {}
    _parse_header_fields(alist.get("default-header", [[]])[0], default, "default-header")
    for fname in tar_codec.DEFAULTABLE_FIELDS:
        default.setdefault(fname, tar_codec._DEFAULTS[fname])
    members = [_parse_member(m) for m in alist.get("headers", [[]])[0]]
    padding = _opt(alist, "padding", 0)
    trailer = _opt(alist, "trailer", b"")
    input_item = _one(alist, "input", "tarball")
    ref = _parse_layer(input_item)
    if not isinstance(ref, (DirectoryRef, ContentRef)):
        raise MalformedDescription("tarball input must be a content reference")
    spec = TarballSpec(
        name=name,
        digest_sha256=digest,
        default_header=default,
        members=members,
        padding=padding,
        trailer=trailer,
    )
    return TarballLayer(spec=spec, input=ref)


def _parse_layer(item):
    if not isinstance(item, list) or not item or not isinstance(item[0], _SYM):
        raise MalformedDescription(f"malformed layer: {item!r}")
    kind = str(item[0])
    body = item[1:]
    if kind in ("directory-ref", "content-ref"):
        return _parse_ref(kind, body)
    if kind == "tarball":
        return _parse_tarball(body)
    alist = _alist(body, kind)
    name = _one(alist, "name", kind)
    digest = _parse_digest(_one(alist, "digest", kind), kind)
    compressor = str(_one(alist, "compressor", kind))
    inner = _parse_layer(_one(alist, "input", kind))
    if kind == "gzip-member":
        header_items = alist.get("header", [[]])[0]
        hmap: dict = {}
        _parse_header_fields(header_items, hmap, "header")
        header = GzipHeader(
            mtime=hmap.get("mtime", 0),
            extra_flags=hmap.get("extra_flags", 0),
            os=hmap.get("os", 255),
            flags=hmap.get("flags", 0),
            extra=hmap.get("extra"),
            fname=hmap.get("fname"),
            comment=hmap.get("comment"),
            header_crc=hmap.get("header_crc"),
        )
        footer_items = alist.get("footer", [[]])[0]
        fmap: dict = {}
        _parse_header_fields(footer_items, fmap, "footer")
        return GzipLayer(
            name, digest, header, fmap.get("crc", 0), fmap.get("isize", 0),
            compressor, inner,
        )
    if kind == "bzip2-member":
        return Bzip2Layer(name, digest, compressor, inner)
    if kind == "xz-member":
        check = str(_opt(alist, "check", _SYM("crc64")))
        return XzLayer(name, digest, compressor, check, inner)
    raise MalformedDescription(f"unknown layer kind {kind!r}")


def read_description(data: bytes) -> Description:
    try:
        value = sexpr.parse(data)
    except sexpr.SexprError as exc:
        raise MalformedDescription(f"unparseable description: {exc}") from exc
    if (
        not isinstance(value, list)
        or len(value) != 3
        or value[0] != _SYM("disarchive")
    ):
        raise MalformedDescription("not a disarchive description")
    version_entry, layer = value[1], value[2]
    if (
        not isinstance(version_entry, list)
        or len(version_entry) != 2
        or version_entry[0] != _SYM("version")
        or version_entry[1] != FORMAT_VERSION
    ):
        raise MalformedDescription("unsupported description version")
    return Description(root=_parse_layer(layer))


# --- description database -------------------------------------------------


class LocalDescriptionDb:
    """Two-level hex fan-out on disk: sha256/ab/<hex>.sexp."""

    def __init__(self, root):
        self.root = os.fspath(root)

    def _path(self, hexdigest: str) -> str:
        return os.path.join(self.root, "sha256", hexdigest[:2], hexdigest + ".sexp")

    def get(self, digest: bytes) -> bytes:
        path = self._path(digest.hex())
        if not os.path.isfile(path):
            raise NotFound(f"no description for sha256 {digest.hex()}")
        with open(path, "rb") as fh:
            return fh.read()

    def put(self, desc: Description) -> str:
        path = self._path(desc.outer_sha256.hex())
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(write_description(desc))
        return path


class RemoteDescriptionDb:
    """Flat remote layout: GET <base>/sha256/<hex>."""

    def __init__(self, base_url: str, transport):
        self.base_url = base_url.rstrip("/")
        self.transport = transport

    def get(self, digest: bytes) -> bytes:
        response = self.transport.request(
            "GET", f"{self.base_url}/sha256/{digest.hex()}"
        )
        if response.status == 404:
            raise NotFound(f"no description for sha256 {digest.hex()}")
        if response.status != 200:
            raise DisarchiveError(
                f"description db returned HTTP {response.status}"
            )
        return response.body


def description_db_lookup(outer_sha256: bytes, db) -> Description:
    """Fetch and parse the description whose outer digest is ``outer_sha256``."""
    data = db.get(outer_sha256)
    desc = read_description(data)
    if desc.outer_sha256 != outer_sha256:
        raise MalformedDescription(
            "description outer digest does not match the lookup key"
        )
    return desc

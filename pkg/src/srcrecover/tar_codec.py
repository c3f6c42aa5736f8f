"""Lossless structural tar codec.

parse_tarball() splits a tar stream into a TarballSpec (defaults plus
per-member deviations, padding, raw-byte overrides for anything the
canonical field encodings cannot reproduce) and a content map holding the
data of regular members.  serialize_tarball() reverses the split
byte-exactly and verifies the result against the recorded SHA-256.

Supported dialects: classic ustar, old GNU (including 'L'/'K' long
name/link members), and pax, whose 'x'/'g' members are carried as opaque
members with their raw data stored inline.  Checksums are stored verbatim,
never recomputed: they are input data.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .errors import ToolError

BLOCK = 512

REGULAR_TYPEFLAGS = frozenset((0, ord("0"), ord("7")))
# Types that never consume data blocks even when the size field is nonzero
# (GNU tar behaves this way for directories with recorded sizes).
DATALESS_TYPEFLAGS = frozenset(ord(c) for c in "123456")


class TarError(ToolError):
    pass


class TruncatedArchive(TarError):
    pass


class UnsupportedMemberType(TarError):
    def __init__(self, message, member_index=None):
        super().__init__(message)
        self.member_index = member_index


class MissingContent(TarError):
    def __init__(self, path):
        super().__init__(f"no content available for member {path!r}")
        self.path = path


class DigestMismatch(TarError):
    def __init__(self, expected, actual):
        super().__init__(
            f"reconstructed stream hashes to {actual.hex()}, expected {expected.hex()}"
        )
        self.expected = expected
        self.actual = actual


# name, offset, length, kind.  kind "octal8"/"octal12" fields decode to
# ints; "string" fields strip NUL padding; "raw" fields keep all bytes.
_FIELD_LAYOUT = (
    ("name", 0, 100, "string"),
    ("mode", 100, 8, "octal"),
    ("uid", 108, 8, "octal"),
    ("gid", 116, 8, "octal"),
    ("size", 124, 12, "octal"),
    ("mtime", 136, 12, "octal"),
    # chksum at 148..156 is handled specially (value + trailer)
    ("typeflag", 156, 1, "byte"),
    ("linkname", 157, 100, "string"),
    ("magic", 257, 6, "raw"),
    ("version", 263, 2, "raw"),
    ("uname", 265, 32, "string"),
    ("gname", 297, 32, "string"),
    ("devmajor", 329, 8, "octal"),
    ("devminor", 337, 8, "octal"),
    ("prefix", 345, 155, "string"),
)

# Fields eligible for default-header elision.  name and chksum are always
# per-member.
DEFAULTABLE_FIELDS = (
    "mode",
    "uid",
    "gid",
    "size",
    "mtime",
    "typeflag",
    "linkname",
    "magic",
    "version",
    "uname",
    "gname",
    "devmajor",
    "devminor",
    "prefix",
    "chksum_trailer",
    "data_padding",
)

_DEFAULTS = {
    "name": b"",
    "mode": 0,
    "uid": 0,
    "gid": 0,
    "size": 0,
    "mtime": 0,
    "typeflag": 0,
    "linkname": b"",
    "magic": b"\0" * 6,
    "version": b"\0" * 2,
    "uname": b"",
    "gname": b"",
    "devmajor": 0,
    "devminor": 0,
    "prefix": b"",
    "chksum_trailer": b"\0 ",
    "data_padding": b"",
}


@dataclass
class TarHeaderFields:
    """Decoded header values plus raw overrides for non-canonical bytes."""

    name: bytes = b""
    mode: int = 0
    uid: int = 0
    gid: int = 0
    size: int = 0
    mtime: int = 0
    chksum: int = 0
    chksum_trailer: bytes = b"\0 "
    typeflag: int = 0
    linkname: bytes = b""
    magic: bytes = b"\0" * 6
    version: bytes = b"\0" * 2
    uname: bytes = b""
    gname: bytes = b""
    devmajor: int = 0
    devminor: int = 0
    prefix: bytes = b""
    data_padding: bytes = b""
    # field name -> verbatim on-disk bytes, set whenever the canonical
    # encoding of the decoded value would not reproduce the original.
    # The pseudo-field "tail" covers bytes 500..512 of the header block.
    raw_overrides: dict = field(default_factory=dict)


@dataclass
class TarMember:
    """One archive member: content key, header deviations, optional inline data.

    ``key`` is the effective path (long names from 'L'/pax applied) used to
    look content up in the content map.  ``fields`` maps field names to
    values deviating from the archive defaults; ``name`` is included
    whenever the raw header name differs from ``key``.  ``inline_data``
    carries the data of non-regular data-bearing members ('L', 'K', 'x',
    'g', unknown types) so reconstruction never depends on the content
    tree for them.
    """

    key: bytes
    fields: dict
    chksum: int = 0
    inline_data: bytes | None = None
    raw_overrides: dict = field(default_factory=dict)


@dataclass
class TarballSpec:
    name: bytes
    digest_sha256: bytes
    default_header: dict
    members: list
    padding: int = 0
    trailer: bytes = b""  # verbatim trailing bytes when not all-zero


def _decode_octal(raw: bytes) -> int:
    if raw and raw[0] & 0x80:
        # GNU base-256: 0x80 flag bit, big-endian remainder
        value = raw[0] & 0x7F
        for b in raw[1:]:
            value = (value << 8) | b
        return value
    text = raw.rstrip(b"\0 ").lstrip(b"\0 ")
    if not text:
        return 0
    try:
        return int(text, 8)
    except ValueError:
        raise TarError(f"unparseable numeric field {raw!r}") from None


def _encode_octal(value: int, width: int) -> bytes:
    digits = b"%0*o" % (width - 1, value)
    if len(digits) == width - 1:
        return digits + b"\0"
    # does not fit: base-256
    out = bytearray(width)
    v = value
    for i in range(width - 1, 0, -1):
        out[i] = v & 0xFF
        v >>= 8
    out[0] = 0x80 | (v & 0x7F)
    return bytes(out)


def _decode_string(raw: bytes) -> bytes:
    nul = raw.find(b"\0")
    return raw if nul < 0 else raw[:nul]


def _encode_string(value: bytes, width: int) -> bytes:
    return value + b"\0" * (width - len(value))


def decode_header(block: bytes) -> TarHeaderFields:
    fields = TarHeaderFields()
    overrides = fields.raw_overrides
    for name, off, length, kind in _FIELD_LAYOUT:
        raw = block[off : off + length]
        if kind == "octal":
            value = _decode_octal(raw)
            if _encode_octal(value, length) != raw:
                overrides[name] = raw
        elif kind == "string":
            value = _decode_string(raw)
            if _encode_string(value, length) != raw:
                overrides[name] = raw
        elif kind == "byte":
            value = raw[0]
        else:  # raw
            value = raw
        setattr(fields, name, value)
    chk = block[148:156]
    stripped = chk.lstrip(b" ")
    i = 0
    while i < len(stripped) and stripped[i : i + 1].isdigit():
        i += 1
    digits = stripped[:i]
    fields.chksum = int(digits, 8) if digits else 0
    fields.chksum_trailer = stripped[i:]
    if _encode_chksum(fields.chksum, fields.chksum_trailer) != chk:
        overrides["chksum"] = chk
    tail = block[500:512]
    if tail != b"\0" * 12:
        overrides["tail"] = tail
    return fields


def _encode_chksum(value: int, trailer: bytes) -> bytes:
    body = b"%06o" % value + trailer
    return body + b"\0" * (8 - len(body)) if len(body) < 8 else body[:8]


def encode_header(fields: TarHeaderFields) -> bytes:
    block = bytearray(BLOCK)
    for name, off, length, kind in _FIELD_LAYOUT:
        value = getattr(fields, name)
        if kind == "octal":
            raw = _encode_octal(value, length)
        elif kind == "string":
            raw = _encode_string(value, length)
        elif kind == "byte":
            raw = bytes([value])
        else:
            raw = value
            if len(raw) != length:
                raise TarError(f"field {name} must be exactly {length} bytes")
        block[off : off + length] = raw
    block[148:156] = _encode_chksum(fields.chksum, fields.chksum_trailer)
    for name, raw in fields.raw_overrides.items():
        if name == "tail":
            block[500:512] = raw
            continue
        if name == "chksum":
            block[148:156] = raw
            continue
        for fname, off, length, _ in _FIELD_LAYOUT:
            if fname == name:
                block[off : off + length] = raw
                break
        else:
            raise TarError(f"unknown override field {name!r}")
    return bytes(block)


def compute_checksum(block: bytes) -> int:
    """ustar checksum: byte sum with the chksum field read as spaces."""
    return sum(block[:148]) + 8 * 0x20 + sum(block[156:])


def _parse_pax_path(data: bytes) -> bytes | None:
    # pax records: "<len> <key>=<value>\n"; only path matters for keying
    pos = 0
    path = None
    while pos < len(data):
        sp = data.find(b" ", pos)
        if sp < 0:
            break
        try:
            reclen = int(data[pos:sp])
        except ValueError:
            break
        record = data[pos : pos + reclen]
        pos += reclen
        if reclen <= 0:
            break
        eq = record.find(b"=")
        if eq < 0:
            continue
        key = record[record.find(b" ") + 1 : eq]
        if key == b"path":
            path = record[eq + 1 :].rstrip(b"\n")
    return path


def member_has_data(typeflag: int) -> bool:
    return typeflag not in DATALESS_TYPEFLAGS


def parse_tarball(stream: bytes, name: bytes = b"") -> tuple[TarballSpec, dict]:
    """Parse ``stream`` into a spec plus a content map keyed by effective path.

    Only regular members (typeflags NUL, '0', '7') route their data through
    the content map; all other data-bearing members keep it inline.
    """
    if isinstance(name, str):
        name = name.encode("utf-8")
    pos = 0
    n = len(stream)
    headers: list[TarHeaderFields] = []
    members: list[TarMember] = []
    content: dict[bytes, bytes] = {}
    pending_longname: bytes | None = None
    pending_paxpath: bytes | None = None
    index = 0
    while pos + BLOCK <= n:
        block = stream[pos : pos + BLOCK]
        if block == b"\0" * BLOCK:
            break
        try:
            fields = decode_header(block)
        except TarError as exc:
            raise UnsupportedMemberType(
                f"undecodable header for member {index}: {exc}", index
            ) from exc
        pos += BLOCK
        size = fields.size
        has_data = member_has_data(fields.typeflag)
        data = b""
        if has_data and size:
            if pos + size > n:
                raise TruncatedArchive(
                    f"member {index} data extends past end of stream"
                )
            data = stream[pos:pos + size]
            pos += size
            pad = (-size) % BLOCK
            padding_bytes = stream[pos : pos + pad]
            if len(padding_bytes) < pad:
                raise TruncatedArchive(f"member {index} padding truncated")
            fields.data_padding = (
                padding_bytes if padding_bytes.strip(b"\0") else b""
            )
            pos += pad

        effective = fields.name
        if fields.prefix:
            effective = fields.prefix + b"/" + fields.name
        if pending_longname is not None:
            effective = pending_longname
            pending_longname = None
        if pending_paxpath is not None:
            effective = pending_paxpath
            pending_paxpath = None

        inline = None
        if fields.typeflag == ord("L"):
            pending_longname = data.rstrip(b"\0")
            inline = data
        elif fields.typeflag == ord("K"):
            inline = data
        elif fields.typeflag in (ord("x"), ord("g")):
            if fields.typeflag == ord("x"):
                pending_paxpath = _parse_pax_path(data)
            inline = data
        elif has_data and fields.typeflag not in REGULAR_TYPEFLAGS:
            inline = data  # unknown type: keep verbatim, never guess
        elif has_data and size:
            content[effective] = data

        headers.append(fields)
        members.append(
            TarMember(
                key=effective,
                fields={},
                chksum=fields.chksum,
                inline_data=inline,
                raw_overrides=dict(fields.raw_overrides),
            )
        )
        index += 1

    rest = stream[pos:]
    if rest.strip(b"\0"):
        padding, trailer = 0, rest
    else:
        padding, trailer = len(rest), b""

    if headers:
        default = compute_default_header(headers)
    else:
        default = {k: v for k, v in _DEFAULTS.items() if k != "name"}
    for fields, member in zip(headers, members):
        devs = {}
        for fname in DEFAULTABLE_FIELDS:
            value = getattr(fields, fname)
            if value != default[fname]:
                devs[fname] = value
        if fields.name != member.key or fields.prefix:
            devs["name"] = fields.name
        member.fields = devs

    spec = TarballSpec(
        name=name,
        digest_sha256=hashlib.sha256(stream).digest(),
        default_header=default,
        members=members,
        padding=padding,
        trailer=trailer,
    )
    return spec, content


def compute_default_header(headers: list) -> dict:
    """Most frequent value per field; ties resolved to the earliest member."""
    default = dict(_DEFAULTS)
    default.pop("name")
    for fname in DEFAULTABLE_FIELDS:
        counts: dict = {}
        order: list = []
        for h in headers:
            value = getattr(h, fname)
            if value not in counts:
                counts[value] = 0
                order.append(value)
            counts[value] += 1
        best = max(order, key=lambda v: counts[v])  # max is stable: first wins
        default[fname] = best
    return default


def _member_fields(spec: TarballSpec, member: TarMember) -> TarHeaderFields:
    fields = TarHeaderFields()
    merged = dict(spec.default_header)
    merged.update(member.fields)
    if "name" not in member.fields:
        merged["name"] = member.key
    for fname, value in merged.items():
        setattr(fields, fname, value)
    fields.chksum = member.chksum
    fields.raw_overrides = dict(member.raw_overrides)
    return fields


def serialize_tarball(spec: TarballSpec, content: dict) -> bytes:
    """Rebuild the byte-exact tar stream described by ``spec``.

    ``content`` maps effective paths to member data.  Raises DigestMismatch
    when the result does not hash to spec.digest_sha256.
    """
    out = bytearray()
    for member in spec.members:
        fields = _member_fields(spec, member)
        out += encode_header(fields)
        if member_has_data(fields.typeflag) and fields.size:
            if member.inline_data is not None:
                data = member.inline_data
            else:
                if member.key not in content:
                    raise MissingContent(member.key)
                data = content[member.key]
            if len(data) != fields.size:
                raise DigestMismatch(
                    spec.digest_sha256, hashlib.sha256(bytes(out) + data).digest()
                )
            out += data
            pad = (-fields.size) % BLOCK
            if fields.data_padding:
                out += fields.data_padding
            else:
                out += b"\0" * pad
    if spec.trailer:
        out += spec.trailer
    else:
        out += b"\0" * spec.padding
    result = bytes(out)
    actual = hashlib.sha256(result).digest()
    if actual != spec.digest_sha256:
        raise DigestMismatch(spec.digest_sha256, actual)
    return result

"""Compression layer codec: decompose gzip/bzip2/xz streams and identify,
from a finite catalog, the compressor that produced them.

Identification is brute force: candidates are tried in a fixed order (header
hints only reorder the search) and a guess counts only when recompressing the
payload reproduces the original bytes.  Catalog entries are pinned to exact
implementations:

  * gnu-1 .. gnu-9, gnu-best-rsync -- the GNU gzip binary (subprocess)
  * zlib-1 .. zlib-9               -- CPython's zlib module
  * bzip2-1 .. bzip2-9             -- CPython's bz2 module (libbzip2)
  * xz-0 .. xz-9, xz-0e .. xz-9e   -- CPython's lzma module (liblzma)

A backing implementation that changes output is a new catalog entry, never a
silent update; gnu entries are only present when a GNU gzip binary is found.
"""

from __future__ import annotations

import bz2
import lzma
import shutil
import struct
import subprocess
import zlib
from dataclasses import dataclass, field

from .errors import ToolError


class CompressError(ToolError):
    pass


class CorruptStream(CompressError):
    pass


class UnknownFormat(CompressError):
    def __init__(self, message, format_name=None):
        super().__init__(message)
        self.format_name = format_name


class NoMatchingCompressor(CompressError):
    pass


@dataclass(frozen=True)
class CompressorEntry:
    name: str
    family: str  # gnu-gzip | zlib-gzip | bzip2 | xz
    level: int
    rsyncable: bool = False
    extreme: bool = False


@dataclass
class GzipHeader:
    """All gzip bytes outside the deflate body and footer.

    extra/fname/comment/header_crc are preserved verbatim when present so
    unusual streams still round-trip.
    """

    mtime: int = 0
    extra_flags: int = 0  # XFL
    os: int = 255
    flags: int = 0
    extra: bytes | None = None
    fname: bytes | None = None
    comment: bytes | None = None
    header_crc: bytes | None = None


@dataclass
class GzipMember:
    header: GzipHeader
    crc: int
    isize: int
    payload: bytes
    raw: bytes  # the member's exact byte range in the original stream


@dataclass
class DecompressedStream:
    format: str  # gzip | bzip2 | xz | plain
    payload: bytes
    gzip_members: list = field(default_factory=list)
    bzip2_level_hint: int = 0
    xz_check: str = "none"  # none | crc32 | crc64 | sha256


_GZIP_MAGIC = b"\x1f\x8b"
_BZIP2_MAGIC = b"BZh"
_XZ_MAGIC = b"\xfd7zXZ\x00"
_FOREIGN_MAGICS = (
    (b"LZIP", "lzip"),
    (b"PK\x03\x04", "zip"),
    (b"PK\x05\x06", "zip"),
    (b"\x28\xb5\x2f\xfd", "zstd"),
    (b"\x1f\x9d", "compress"),
)

_XZ_CHECK_NAMES = {0x00: "none", 0x01: "crc32", 0x04: "crc64", 0x0A: "sha256"}
_XZ_CHECK_IDS = {v: k for k, v in _XZ_CHECK_NAMES.items()}
_LZMA_CHECKS = {
    "none": lzma.CHECK_NONE,
    "crc32": lzma.CHECK_CRC32,
    "crc64": lzma.CHECK_CRC64,
    "sha256": lzma.CHECK_SHA256,
}


def _find_gnu_gzip() -> str | None:
    path = shutil.which("gzip")
    if not path:
        return None
    try:
        out = subprocess.run(
            [path, "--version"], capture_output=True, timeout=10
        ).stdout
    except OSError:
        return None
    return path if out.startswith(b"gzip") else None


GNU_GZIP_PATH = _find_gnu_gzip()


def build_catalog() -> dict[str, CompressorEntry]:
    catalog: dict[str, CompressorEntry] = {}

    def add(entry):
        catalog[entry.name] = entry

    if GNU_GZIP_PATH:
        for level in range(1, 10):
            add(CompressorEntry(f"gnu-{level}", "gnu-gzip", level))
        add(CompressorEntry("gnu-best-rsync", "gnu-gzip", 9, rsyncable=True))
    for level in range(1, 10):
        add(CompressorEntry(f"zlib-{level}", "zlib-gzip", level))
    for level in range(1, 10):
        add(CompressorEntry(f"bzip2-{level}", "bzip2", level))
    for level in range(10):
        add(CompressorEntry(f"xz-{level}", "xz", level))
        add(CompressorEntry(f"xz-{level}e", "xz", level, extreme=True))
    return catalog


CATALOG = build_catalog()


def _parse_gzip_header(data: bytes, pos: int) -> tuple[GzipHeader, int]:
    if len(data) - pos < 10:
        raise CorruptStream("gzip header truncated")
    if data[pos : pos + 2] != _GZIP_MAGIC:
        raise CorruptStream("bad gzip magic")
    if data[pos + 2] != 8:
        raise CorruptStream(f"unsupported gzip compression method {data[pos + 2]}")
    flags = data[pos + 3]
    header = GzipHeader(
        mtime=struct.unpack("<I", data[pos + 4 : pos + 8])[0],
        extra_flags=data[pos + 8],
        os=data[pos + 9],
        flags=flags,
    )
    pos += 10
    if flags & 0x04:  # FEXTRA
        if len(data) - pos < 2:
            raise CorruptStream("gzip FEXTRA truncated")
        xlen = struct.unpack("<H", data[pos : pos + 2])[0]
        header.extra = data[pos + 2 : pos + 2 + xlen]
        if len(header.extra) != xlen:
            raise CorruptStream("gzip FEXTRA truncated")
        pos += 2 + xlen
    if flags & 0x08:  # FNAME
        end = data.find(b"\0", pos)
        if end < 0:
            raise CorruptStream("gzip FNAME unterminated")
        header.fname = data[pos:end]
        pos = end + 1
    if flags & 0x10:  # FCOMMENT
        end = data.find(b"\0", pos)
        if end < 0:
            raise CorruptStream("gzip FCOMMENT unterminated")
        header.comment = data[pos:end]
        pos = end + 1
    if flags & 0x02:  # FHCRC
        header.header_crc = data[pos : pos + 2]
        if len(header.header_crc) != 2:
            raise CorruptStream("gzip FHCRC truncated")
        pos += 2
    return header, pos


def build_gzip_header(header: GzipHeader) -> bytes:
    out = bytearray()
    out += _GZIP_MAGIC
    out.append(8)
    out.append(header.flags)
    out += struct.pack("<I", header.mtime)
    out.append(header.extra_flags)
    out.append(header.os)
    if header.flags & 0x04:
        out += struct.pack("<H", len(header.extra or b""))
        out += header.extra or b""
    if header.flags & 0x08:
        out += (header.fname or b"") + b"\0"
    if header.flags & 0x10:
        out += (header.comment or b"") + b"\0"
    if header.flags & 0x02:
        out += header.header_crc or b"\0\0"
    return bytes(out)


def _decompress_gzip(data: bytes) -> DecompressedStream:
    members = []
    pos = 0
    while pos < len(data):
        start = pos
        header, pos = _parse_gzip_header(data, pos)
        d = zlib.decompressobj(-zlib.MAX_WBITS)
        try:
            payload = d.decompress(data[pos:])
        except zlib.error as exc:
            raise CorruptStream(f"deflate error: {exc}") from exc
        if not d.eof:
            raise CorruptStream("deflate body truncated")
        consumed = len(data) - pos - len(d.unused_data)
        pos += consumed
        footer = data[pos : pos + 8]
        if len(footer) != 8:
            raise CorruptStream("gzip footer truncated")
        crc, isize = struct.unpack("<II", footer)
        if crc != zlib.crc32(payload):
            raise CorruptStream("gzip CRC mismatch")
        if isize != len(payload) % (1 << 32):
            raise CorruptStream("gzip ISIZE mismatch")
        pos += 8
        members.append(GzipMember(header, crc, isize, payload, data[start:pos]))
    return DecompressedStream(
        "gzip",
        b"".join(m.payload for m in members),
        gzip_members=members,
    )


def _decompress_bzip2(data: bytes) -> DecompressedStream:
    level = data[3] - ord("0") if ord("1") <= data[3] <= ord("9") else 0
    try:
        payload = bz2.decompress(data)
    except (OSError, ValueError) as exc:
        raise CorruptStream(f"bzip2 error: {exc}") from exc
    return DecompressedStream("bzip2", payload, bzip2_level_hint=level)


def _decompress_xz(data: bytes) -> DecompressedStream:
    check = _XZ_CHECK_NAMES.get(data[7] & 0x0F if len(data) > 7 else -1)
    if check is None:
        raise CorruptStream("unknown xz check type")
    try:
        payload = lzma.decompress(data, format=lzma.FORMAT_XZ)
    except lzma.LZMAError as exc:
        raise CorruptStream(f"xz error: {exc}") from exc
    return DecompressedStream("xz", payload, xz_check=check)


def decompress(stream: bytes) -> DecompressedStream:
    """Split ``stream`` into payload and everything needed to rebuild it.

    Recognized-but-unsupported containers (lzip, zip, zstd, compress) raise
    UnknownFormat; anything without a known magic is passed through as
    format "plain".
    """
    if stream.startswith(_GZIP_MAGIC):
        return _decompress_gzip(stream)
    if stream.startswith(_BZIP2_MAGIC):
        return _decompress_bzip2(stream)
    if stream.startswith(_XZ_MAGIC):
        return _decompress_xz(stream)
    for magic, name in _FOREIGN_MAGICS:
        if stream.startswith(magic):
            raise UnknownFormat(f"{name} streams are not supported", name)
    return DecompressedStream("plain", stream)


def _gnu_gzip_body(payload: bytes, entry: CompressorEntry) -> bytes:
    if GNU_GZIP_PATH is None:
        raise NoMatchingCompressor("GNU gzip binary unavailable")
    cmd = [GNU_GZIP_PATH, "-n", "-c", f"-{entry.level}"]
    if entry.rsyncable:
        cmd.insert(2, "--rsyncable")
    proc = subprocess.run(cmd, input=payload, capture_output=True)
    if proc.returncode != 0:
        raise CompressError(f"gzip failed: {proc.stderr.decode(errors='replace')}")
    return proc.stdout[10:]  # strip the tool's own header, keep body+footer


def recompress(
    payload: bytes,
    entry: CompressorEntry | str,
    header: GzipHeader | None = None,
    xz_check: str = "crc64",
) -> bytes:
    """Deterministically recompress ``payload`` with a catalog entry.

    For gzip families the given header bytes are spliced in verbatim; the
    default header (mtime 0, XFL 0, OS 255) is only used for self-tests.
    """
    if isinstance(entry, str):
        try:
            entry = CATALOG[entry]
        except KeyError:
            raise CompressError(f"unknown compressor {entry!r}") from None
    if entry.family == "gnu-gzip":
        body = _gnu_gzip_body(payload, entry)
        return build_gzip_header(header or GzipHeader()) + body
    if entry.family == "zlib-gzip":
        co = zlib.compressobj(entry.level, zlib.DEFLATED, -zlib.MAX_WBITS)
        body = co.compress(payload) + co.flush()
        footer = struct.pack("<II", zlib.crc32(payload), len(payload) % (1 << 32))
        return build_gzip_header(header or GzipHeader()) + body + footer
    if entry.family == "bzip2":
        return bz2.compress(payload, entry.level)
    if entry.family == "xz":
        preset = entry.level | (lzma.PRESET_EXTREME if entry.extreme else 0)
        return lzma.compress(
            payload,
            format=lzma.FORMAT_XZ,
            check=_LZMA_CHECKS[xz_check],
            preset=preset,
        )
    raise CompressError(f"unknown family {entry.family!r}")


def _gzip_search_order(extra_flags: int) -> list[str]:
    gnu = ["gnu-9", "gnu-best-rsync"] + [f"gnu-{l}" for l in range(8, 0, -1)]
    zlib_names = [f"zlib-{l}" for l in range(9, 0, -1)]
    order = gnu + zlib_names
    if extra_flags == 2:  # tool claimed max compression
        priority = ["gnu-9", "gnu-best-rsync", "zlib-9"]
    elif extra_flags == 4:  # tool claimed fastest
        priority = ["gnu-1", "zlib-1"]
    else:
        priority = []
    ordered = priority + [n for n in order if n not in priority]
    return [n for n in ordered if n in CATALOG]


def _bzip2_search_order(level_hint: int) -> list[str]:
    names = [f"bzip2-{l}" for l in range(9, 0, -1)]
    hint = f"bzip2-{level_hint}"
    if hint in names:
        names.remove(hint)
        names.insert(0, hint)
    return names


_XZ_SEARCH_ORDER = (
    [f"xz-{l}" for l in (6, 9, 8, 7, 5, 4, 3, 2, 1, 0)]
    + [f"xz-{l}e" for l in (6, 9, 8, 7, 5, 4, 3, 2, 1, 0)]
)


def guess_compressor(payload: bytes, original: bytes) -> CompressorEntry:
    """Return the first catalog entry whose recompression of ``payload``
    reproduces ``original`` byte for byte."""
    decomposed = decompress(original)
    if decomposed.format == "gzip":
        if len(decomposed.gzip_members) != 1:
            # multi-member originals are guessed per member via guess_gzip_members
            raise NoMatchingCompressor(
                "multi-member gzip stream; guess members individually"
            )
        member = decomposed.gzip_members[0]
        return _guess_gzip_member(member)
    if decomposed.format == "bzip2":
        for name in _bzip2_search_order(decomposed.bzip2_level_hint):
            if recompress(payload, name) == original:
                return CATALOG[name]
        raise NoMatchingCompressor("no bzip2 catalog entry reproduces the stream")
    if decomposed.format == "xz":
        for name in _XZ_SEARCH_ORDER:
            if recompress(payload, name, xz_check=decomposed.xz_check) == original:
                return CATALOG[name]
        raise NoMatchingCompressor("no xz catalog entry reproduces the stream")
    raise UnknownFormat(f"cannot guess compressor for format {decomposed.format}")


def _guess_gzip_member(member: GzipMember) -> CompressorEntry:
    for name in _gzip_search_order(member.header.extra_flags):
        if recompress(member.payload, name, header=member.header) == member.raw:
            return CATALOG[name]
    raise NoMatchingCompressor("no gzip catalog entry reproduces the stream")


def guess_gzip_members(stream: DecompressedStream) -> list[CompressorEntry]:
    return [_guess_gzip_member(m) for m in stream.gzip_members]

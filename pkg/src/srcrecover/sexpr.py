"""Canonical s-expression reader/writer for on-disk descriptions.

Values are modeled with plain Python types:

  * Symbol   -- a str subclass; lowercase tokens over [a-z0-9-]
  * bytes    -- byte strings, always written quoted with \\xNN escapes
  * int      -- unbounded decimal integers
  * list     -- ordered sequences of the above

``parse(write_canonical(v)) == v`` holds for every well-formed value.
Comments (``;`` to end of line) are accepted on read and never written.
"""

from __future__ import annotations

from .errors import ToolError


class SexprError(ToolError):
    pass


class UnbalancedParens(SexprError):
    pass


class InvalidEscape(SexprError):
    pass


class TrailingGarbage(SexprError):
    pass


class Symbol(str):
    """A bare lowercase token; distinguishes ``foo`` from ``"foo"``."""

    __slots__ = ()

    def __repr__(self):
        return f"Symbol({str.__repr__(self)})"


_SYMBOL_CHARS = frozenset(b"abcdefghijklmnopqrstuvwxyz0123456789-")
_WHITESPACE = frozenset(b" \t\r\n")


def parse(data: bytes) -> object:
    """Parse one top-level value from ``data``.

    Anything but trailing whitespace/comments after the value raises
    TrailingGarbage.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    value, pos = _parse_value(data, _skip_blank(data, 0))
    pos = _skip_blank(data, pos)
    if pos != len(data):
        raise TrailingGarbage(f"unexpected input at byte {pos}")
    return value


def _skip_blank(data: bytes, pos: int) -> int:
    while pos < len(data):
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord(";"):
            while pos < len(data) and data[pos] != ord("\n"):
                pos += 1
        else:
            break
    return pos


def _parse_value(data: bytes, pos: int) -> tuple[object, int]:
    if pos >= len(data):
        raise UnbalancedParens("unexpected end of input")
    c = data[pos]
    if c == ord("("):
        items = []
        pos = _skip_blank(data, pos + 1)
        while True:
            if pos >= len(data):
                raise UnbalancedParens("unclosed list")
            if data[pos] == ord(")"):
                return items, pos + 1
            value, pos = _parse_value(data, pos)
            items.append(value)
            pos = _skip_blank(data, pos)
    if c == ord(")"):
        raise UnbalancedParens(f"stray ')' at byte {pos}")
    if c == ord('"'):
        return _parse_string(data, pos)
    return _parse_atom(data, pos)


def _parse_string(data: bytes, pos: int) -> tuple[bytes, int]:
    out = bytearray()
    pos += 1
    while True:
        if pos >= len(data):
            raise UnbalancedParens("unterminated string")
        c = data[pos]
        if c == ord('"'):
            return bytes(out), pos + 1
        if c == ord("\\"):
            if pos + 1 >= len(data):
                raise InvalidEscape("escape at end of input")
            e = data[pos + 1]
            if e == ord('"') or e == ord("\\"):
                out.append(e)
                pos += 2
            elif e == ord("x"):
                hexpart = data[pos + 2 : pos + 4]
                if len(hexpart) != 2:
                    raise InvalidEscape(f"truncated \\x escape at byte {pos}")
                try:
                    out.append(int(hexpart, 16))
                except ValueError:
                    raise InvalidEscape(
                        f"bad \\x escape {hexpart!r} at byte {pos}"
                    ) from None
                pos += 4
            else:
                raise InvalidEscape(f"unknown escape \\{chr(e)} at byte {pos}")
        else:
            out.append(c)
            pos += 1


def _parse_atom(data: bytes, pos: int) -> tuple[object, int]:
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] not in b'();"':
        pos += 1
    token = data[start:pos]
    body = token[1:] if token[:1] == b"-" else token
    if body and all(c in b"0123456789" for c in body):
        return int(token), pos
    for c in token:
        if c not in _SYMBOL_CHARS:
            raise SexprError(f"invalid token {token!r} at byte {start}")
    return Symbol(token.decode("ascii")), pos


def write_canonical(value: object) -> bytes:
    """Serialize ``value`` with single-space separation, no alignment."""
    out = bytearray()
    _write(value, out)
    return bytes(out)


def _write(value: object, out: bytearray) -> None:
    if isinstance(value, Symbol):
        token = str(value)
        if not token or any(ord(c) not in _SYMBOL_CHARS for c in token):
            raise SexprError(f"symbol {token!r} has characters outside [a-z0-9-]")
        if token.lstrip("-").isdigit():
            raise SexprError(f"symbol {token!r} would read back as an integer")
        out += token.encode("ascii")
    elif isinstance(value, bool):
        raise SexprError("booleans are not part of the value model")
    elif isinstance(value, int):
        out += str(value).encode("ascii")
    elif isinstance(value, (bytes, bytearray)):
        out.append(ord('"'))
        for b in bytes(value):
            if b == ord('"'):
                out += b'\\"'
            elif b == ord("\\"):
                out += b"\\\\"
            elif 0x20 <= b <= 0x7E:
                out.append(b)
            else:
                out += b"\\x%02x" % b
        out.append(ord('"'))
    elif isinstance(value, (list, tuple)):
        out.append(ord("("))
        for i, item in enumerate(value):
            if i:
                out.append(ord(" "))
            _write(item, out)
        out.append(ord(")"))
    else:
        raise SexprError(f"cannot serialize {type(value).__name__}")

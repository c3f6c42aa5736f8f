#!/usr/bin/env python3
"""Report the compressor-identification rate over a directory of real
compressed tarballs.

This is a reporting tool, not a test: identification of archives found in
the wild depends on which compressor implementations produced them, so the
rate is printed for inspection rather than asserted.

Usage: wild_corpus_report.py DIR [DIR ...]
"""

import sys
from pathlib import Path

from srcrecover.compress_codec import (
    CorruptStream,
    NoMatchingCompressor,
    UnknownFormat,
    decompress,
    guess_compressor,
)

SUFFIXES = (".tar.gz", ".tgz", ".tar.bz2", ".tbz2", ".tar.xz", ".txz")


def examine(path: Path):
    data = path.read_bytes()
    try:
        stream = decompress(data)
    except (UnknownFormat, CorruptStream) as exc:
        return "unreadable", str(exc)
    if stream.format == "plain":
        return "plain", ""
    try:
        entry = guess_compressor(stream.payload, data)
    except NoMatchingCompressor:
        return "unidentified", ""
    return "identified", getattr(entry, "name", str(entry))


def main(argv):
    if not argv:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    outcomes = {"identified": 0, "unidentified": 0, "unreadable": 0, "plain": 0}
    for directory in argv:
        for path in sorted(Path(directory).rglob("*")):
            if not path.name.lower().endswith(SUFFIXES) or not path.is_file():
                continue
            outcome, detail = examine(path)
            outcomes[outcome] += 1
            print(f"{outcome:12s} {detail:16s} {path}")
    considered = outcomes["identified"] + outcomes["unidentified"]
    print()
    for key, count in outcomes.items():
        print(f"{key}: {count}")
    if considered:
        rate = outcomes["identified"] / considered
        print(f"identification rate: {rate:.1%} of {considered} compressed tarballs")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))

"""srcrecover: long-term source-code recovery toolkit.

Disassembles source tarballs into content-addressed descriptions and
reassembles them byte-identically, computes normalized-archive hashes and
SWHIDs, resolves missing sources through an archive fallback ladder, and
audits link rot and archive coverage over source manifests.
"""

from .disarchive import Description, assemble, disassemble, read_description, write_description
from .nar import NarDigest, nar_hash, nar_serialize, tree_from_disk
from .resolver import Resolution, SourceRecord, resolve
from .swhid import Swhid, format_swhid, parse_swhid, swhid_for_content, swhid_for_directory

__version__ = "0.1.0"

__all__ = [
    "Description",
    "NarDigest",
    "Resolution",
    "SourceRecord",
    "Swhid",
    "assemble",
    "disassemble",
    "format_swhid",
    "nar_hash",
    "nar_serialize",
    "parse_swhid",
    "read_description",
    "resolve",
    "swhid_for_content",
    "swhid_for_directory",
    "tree_from_disk",
    "write_description",
]

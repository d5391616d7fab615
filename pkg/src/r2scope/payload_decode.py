"""Deterministic multi-layer payload decoding.

Container layers (URL escaping, Base64, gzip, zlib, bzip2, LZMA) are peeled
off one at a time, re-entering the chain on the inner bytes, and the
innermost bytes are turned into text with UTF-8 or, failing that, Latin-1.
A candidate is only kept if its text clears the printable-character
threshold; every decoder used is lossless.
"""

from __future__ import annotations

import base64
import binascii
import bz2
import gzip
import lzma
import re
import zlib
from dataclasses import dataclass, field
from urllib.parse import unquote_to_bytes

DEFAULT_THRESHOLD = 0.85
DEFAULT_MAX_DEPTH = 3
MIN_BASE64_DECODED = 8
MAX_INFLATE = 16 * 1024 * 1024

STEP_NAMES = ("utf8", "latin1", "url", "base64", "gzip", "zlib", "bzip2", "lzma")
CONTAINER_STEPS = ("url", "base64", "gzip", "zlib", "bzip2", "lzma")

_PRINTABLE = frozenset(range(0x20, 0x7F)) | {0x09, 0x0A, 0x0D}
_WS = re.compile(r"\s+")
_PCT = re.compile(rb"%[0-9A-Fa-f]{2}")
_B64 = re.compile(rb"[A-Za-z0-9+/]*={0,2}")
_HTTP_REQUEST = re.compile(rb"[A-Z]{3,10} \S+ HTTP/1\.[01]\r\n")


@dataclass(frozen=True)
class DecodeConfig:
    threshold: float = DEFAULT_THRESHOLD
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be within [0, 1]")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")

    @classmethod
    def from_mapping(cls, cfg: dict) -> "DecodeConfig":
        """Read ``decode.threshold`` / ``decode.max_depth`` from a config dict."""
        section = cfg.get("decode", {})
        return cls(
            threshold=float(section.get("threshold", DEFAULT_THRESHOLD)),
            max_depth=int(section.get("max_depth", DEFAULT_MAX_DEPTH)),
        )


@dataclass(frozen=True)
class DecodedPayload:
    source_len: int
    text: str
    steps: tuple[str, ...] = field(default_factory=tuple)
    printable_ratio: float = 0.0
    accepted: bool = False


def printable_ratio(text: str) -> float:
    if not text:
        return 0.0
    good = sum(1 for ch in text if ord(ch) in _PRINTABLE)
    return good / len(text)


def normalize(text: str) -> str:
    return _WS.sub(" ", text).strip()


# -- container decoders: each returns the inner bytes or None ---------------


def _url(data: bytes) -> bytes | None:
    if b"%" not in data or not _PCT.search(data):
        return None
    try:
        data.decode("ascii")
    except UnicodeDecodeError:
        return None
    return unquote_to_bytes(data)


def _base64(data: bytes) -> bytes | None:
    compact = b"".join(data.split())
    if not compact or len(compact) % 4 or not _B64.fullmatch(compact):
        return None
    try:
        out = base64.b64decode(compact, validate=True)
    except binascii.Error:
        return None
    return out if len(out) >= MIN_BASE64_DECODED else None


def _drain(decomp, data: bytes) -> bytes | None:
    out = decomp.decompress(data, MAX_INFLATE)
    if not decomp.eof or len(out) >= MAX_INFLATE:
        return None
    return out


def _gzip(data: bytes) -> bytes | None:
    if data[:2] != b"\x1f\x8b":
        return None
    try:
        d = zlib.decompressobj(16 + zlib.MAX_WBITS)
        out = d.decompress(data, MAX_INFLATE)
        if not d.eof or d.unused_data or len(out) >= MAX_INFLATE:
            return None
        return out
    except zlib.error:
        return None


def _zlib(data: bytes) -> bytes | None:
    if len(data) < 2 or data[0] & 0x0F != 8 or ((data[0] << 8) | data[1]) % 31:
        return None
    try:
        d = zlib.decompressobj()
        out = d.decompress(data, MAX_INFLATE)
        if not d.eof or d.unused_data or len(out) >= MAX_INFLATE:
            return None
        return out
    except zlib.error:
        return None


def _bzip2(data: bytes) -> bytes | None:
    if data[:3] != b"BZh":
        return None
    try:
        return _drain(bz2.BZ2Decompressor(), data)
    except (OSError, ValueError):
        return None


def _lzma(data: bytes) -> bytes | None:
    if not (data[:6] == b"\xfd7zXZ\x00" or data[:1] == b"\x5d"):
        return None
    try:
        return _drain(lzma.LZMADecompressor(lzma.FORMAT_AUTO), data)
    except lzma.LZMAError:
        return None


_CONTAINERS = {
    "url": _url,
    "base64": _base64,
    "gzip": _gzip,
    "zlib": _zlib,
    "bzip2": _bzip2,
    "lzma": _lzma,
}


def _charset(data: bytes, threshold: float) -> tuple[str, str, float] | None:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        pass
    else:
        ratio = printable_ratio(text)
        if ratio >= threshold:
            return "utf8", text, ratio
    text = data.decode("latin-1")
    ratio = printable_ratio(text)
    if ratio >= threshold:
        return "latin1", text, ratio
    return None


def _chain(data: bytes, depth: int, cfg: DecodeConfig) -> tuple[tuple[str, ...], str, float] | None:
    if depth < cfg.max_depth:
        for name in CONTAINER_STEPS:
            inner = _CONTAINERS[name](data)
            if inner is None or inner == data:
                continue
            found = _chain(inner, depth + 1, cfg)
            if found is not None:
                steps, text, ratio = found
                return (name,) + steps, text, ratio
    terminal = _charset(data, cfg.threshold)
    if terminal is None:
        return None
    name, text, ratio = terminal
    return (name,), text, ratio


def decode(payload: bytes, config: DecodeConfig | None = None) -> DecodedPayload:
    """Decode raw stream bytes into text, or report rejection.

    An HTTP request is split at the end of its header block: the header is
    read as Latin-1 text and only the body goes through the chain, so a
    Base64 or compressed body is unwrapped in place.
    """
    cfg = config or DecodeConfig()
    payload = bytes(payload)
    if _HTTP_REQUEST.match(payload):
        head, sep, body = payload.partition(b"\r\n\r\n")
        if sep and body:
            inner = _chain(body, 0, cfg)
            if inner is not None:
                steps, body_text, _ = inner
                text = head.decode("latin-1") + "\r\n\r\n" + body_text
                ratio = printable_ratio(text)
                if ratio >= cfg.threshold:
                    return DecodedPayload(len(payload), text, steps, ratio, True)

    found = _chain(payload, 0, cfg)
    if found is None:
        return DecodedPayload(len(payload), "", (), 0.0, False)
    steps, text, ratio = found
    return DecodedPayload(len(payload), text, steps, ratio, True)


# -- encoders, used by fixtures and round-trip checks ------------------------


def url_encode_all(data: bytes) -> bytes:
    return "".join(f"%{b:02X}" for b in data).encode("ascii")


ENCODERS = {
    "url": url_encode_all,
    "base64": base64.b64encode,
    "gzip": lambda b: gzip.compress(b, mtime=0),
    "zlib": zlib.compress,
    "bzip2": bz2.compress,
    "lzma": lzma.compress,
}

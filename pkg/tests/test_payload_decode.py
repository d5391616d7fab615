import base64
import gzip
import random
import string
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from r2scope.payload_decode import (
    _CONTAINERS,
    CONTAINER_STEPS,
    ENCODERS,
    DecodeConfig,
    decode,
    normalize,
    printable_ratio,
)

ALPHABET = string.ascii_letters + string.digits + string.punctuation.replace("%", "") + " "


def printable_strings(seed: int, n: int) -> list[str]:
    rng = random.Random(seed)
    return ["".join(rng.choice(ALPHABET) for _ in range(rng.randint(8, 200))) for _ in range(n)]


def test_printable_ratio_examples():
    assert printable_ratio("hello") == 1.0
    assert printable_ratio("\x00" * 5) == 0.0
    assert printable_ratio("ab\x00cd") == 0.8
    assert printable_ratio("") == 0.0
    assert printable_ratio("a\tb\r\n") == 1.0


def test_normalize_examples():
    assert normalize("a   b\n c") == "a b c"
    assert normalize("") == ""
    assert normalize("x y") == "x y"


@given(st.text())
def test_normalize_idempotent(t):
    assert normalize(normalize(t)) == normalize(t)


def test_plain_text():
    d = decode(b"plain text")
    assert d.accepted and d.steps == ("utf8",) and d.text == "plain text"


def test_base64_of_gzip():
    d = decode(base64.b64encode(gzip.compress(b"attack")))
    assert d.accepted
    assert d.steps == ("base64", "gzip", "utf8")
    assert d.text == "attack"


def test_seeded_random_bytes_rejected_by_every_strategy():
    data = random.Random(64).randbytes(64)
    # exhaustive: no terminal charset and no container accepts these bytes
    assert printable_ratio(data.decode("latin-1")) < 0.85
    with pytest.raises(UnicodeDecodeError):
        data.decode("utf-8")
    assert all(fn(data) is None for fn in _CONTAINERS.values())
    d = decode(data)
    assert not d.accepted and d.text == "" and d.steps == ()


def test_latin1_fallback():
    d = decode("café au lait".encode("latin-1"))
    assert d.accepted and d.steps == ("latin1",)


def test_url_needs_a_real_escape():
    assert decode(b"no escapes here").steps == ("utf8",)
    d = decode(b"a%20b%3Dc")
    assert d.steps == ("url", "utf8") and d.text == "a b=c"


def test_short_base64_token_not_decoded():
    # "YWJj" decodes to 3 bytes, below the minimum
    assert decode(b"YWJj").steps == ("utf8",)


def test_depth_bound():
    t = b"layered payload text"
    x = t
    for _ in range(4):
        x = base64.b64encode(x)
    d = decode(x, DecodeConfig(max_depth=3))
    assert d.accepted and len(d.steps) <= 4
    assert d.text != t.decode()
    assert decode(x, DecodeConfig(max_depth=4)).text == t.decode()


def test_http_body_is_unwrapped():
    body = base64.b64encode(b'{"a":"$1:__proto__"}')
    req = b"POST / HTTP/1.1\r\nHost: x\r\n\r\n" + body
    d = decode(req)
    assert d.steps == ("base64", "utf8")
    assert d.text.endswith('{"a":"$1:__proto__"}')
    assert d.text.startswith("POST / HTTP/1.1")


def test_config_from_mapping():
    cfg = DecodeConfig.from_mapping({"decode": {"threshold": 0.9, "max_depth": 2}})
    assert cfg == DecodeConfig(0.9, 2)
    assert DecodeConfig.from_mapping({}) == DecodeConfig()
    with pytest.raises(ValueError):
        DecodeConfig(threshold=1.5)


@pytest.mark.parametrize("step", CONTAINER_STEPS)
def test_single_step_round_trip(step):
    for t in printable_strings(CONTAINER_STEPS.index(step), 40):
        d = decode(ENCODERS[step](t.encode()))
        assert d.accepted and normalize(d.text) == normalize(t), (step, t)
        assert d.steps[0] == step


@pytest.mark.parametrize("outer,inner", list(product(CONTAINER_STEPS, repeat=2)))
def test_two_layer_round_trip(outer, inner):
    for t in printable_strings(7, 10):
        d = decode(ENCODERS[outer](ENCODERS[inner](t.encode())))
        assert d.accepted and normalize(d.text) == normalize(t)
        assert d.steps[:2] == (outer, inner)


def test_determinism():
    rng = random.Random(1)
    blobs = [rng.randbytes(rng.randrange(1, 100)) for _ in range(2000)]
    assert [decode(b) for b in blobs] == [decode(b) for b in blobs]
    for b in blobs:
        d = decode(b)
        assert not d.accepted or (d.printable_ratio >= 0.85 and d.steps)

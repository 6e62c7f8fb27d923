import numpy as np
import pytest

from learnaug.augment import AugmentParams
from learnaug.encoder import EncoderConfig, init_encoder
from learnaug.errors import ParseError
from learnaug.tensorfile import (MAGIC, load_arrays, load_augment, load_encoder, save_arrays,
                                 save_augment, save_encoder)


def test_augment_roundtrip_and_bytes(tmp_path):
    p = AugmentParams.initial(6)
    p.A[1, 2] = -0.25
    save_augment(tmp_path / "a.bin", p)
    save_augment(tmp_path / "b.bin", p.copy())
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    q = load_augment(tmp_path / "a.bin")
    assert q.sharpness == p.sharpness
    for k, v in p.arrays().items():
        np.testing.assert_array_equal(q.arrays()[k], v)


def test_layout(tmp_path):
    save_arrays(tmp_path / "x.bin", "demo", {"b": np.arange(3.0), "a": np.eye(2)})
    raw = (tmp_path / "x.bin").read_bytes()
    assert raw.startswith(MAGIC)
    header_end = raw.index(b"\n", len(MAGIC)) + 1
    payload = raw[header_end:]
    assert len(payload) == 8 * (4 + 3)
    np.testing.assert_array_equal(np.frombuffer(payload[:32], "<f8"), np.eye(2).ravel())


def test_encoder_roundtrip(tmp_path):
    cfg = EncoderConfig(patch_len=4, stride=2, dim=8, blocks=1, heads=2, causal=False)
    state = init_encoder(cfg, 3)
    save_encoder(tmp_path / "e.bin", state)
    back = load_encoder(tmp_path / "e.bin")
    assert back.cfg == cfg
    assert set(back.weights) == set(state.weights)
    for k in state.weights:
        np.testing.assert_array_equal(back.weights[k], state.weights[k])


def test_corrupt_files(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"hello\n")
    with pytest.raises(ParseError):
        load_arrays(tmp_path / "bad.bin")
    save_augment(tmp_path / "a.bin", AugmentParams.initial(3))
    raw = (tmp_path / "a.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-8])
    with pytest.raises(ParseError):
        load_arrays(tmp_path / "t.bin")
    with pytest.raises(ParseError):
        load_encoder(tmp_path / "a.bin")


@pytest.mark.parametrize("header", [b"", b"{}\n", b"[1]\n", b'{"kind": "x", "meta": {}, "arrays": [["a"]]}\n'])
def test_bad_headers(tmp_path, header):
    (tmp_path / "h.bin").write_bytes(MAGIC + header)
    with pytest.raises(ParseError):
        load_arrays(tmp_path / "h.bin")

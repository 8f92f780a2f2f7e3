import struct

import numpy as np
import pytest

from adabins.io import FormatError, load_corpus, read_depth_map, read_rgb, save_corpus, write_depth_map, write_rgb
from adabins.synthdata import CorpusConfig, make_corpus


class TestDepthMap:
    def test_roundtrip_bitwise_with_nan(self, tmp_path, rng):
        d = rng.uniform(0.1, 10, (5, 7)).astype(np.float32)
        d[1, 2] = d[4, 0] = np.nan
        write_depth_map(tmp_path / "d.adbd", d)
        back = read_depth_map(tmp_path / "d.adbd")
        assert back.tobytes() == d.tobytes()

    def test_header_layout(self, tmp_path):
        write_depth_map(tmp_path / "d.adbd", np.zeros((3, 5), np.float32))
        raw = (tmp_path / "d.adbd").read_bytes()
        assert raw[:4] == b"ADBD"
        assert struct.unpack("<HII", raw[4:14]) == (1, 5, 3)
        assert len(raw) == 14 + 4 * 15

    def test_mask_writes_nan(self, tmp_path):
        mask = np.array([[True, False]])
        write_depth_map(tmp_path / "d.adbd", np.array([[1.0, 2.0]]), mask)
        back = read_depth_map(tmp_path / "d.adbd")
        assert back[0, 0] == 1.0 and np.isnan(back[0, 1])

    @pytest.mark.parametrize("blob", [b"ADB", b"XXXX" + bytes(10), b"ADBD" + struct.pack("<HII", 2, 1, 1) + bytes(4)])
    def test_rejects_bad_files(self, tmp_path, blob):
        (tmp_path / "bad").write_bytes(blob)
        with pytest.raises(FormatError):
            read_depth_map(tmp_path / "bad")

    def test_truncated_payload(self, tmp_path):
        write_depth_map(tmp_path / "d.adbd", np.zeros((4, 4), np.float32))
        raw = (tmp_path / "d.adbd").read_bytes()
        (tmp_path / "d.adbd").write_bytes(raw[:-2])
        with pytest.raises(FormatError):
            read_depth_map(tmp_path / "d.adbd")


def test_rgb_roundtrip(tmp_path, rng):
    img = (rng.integers(0, 256, (3, 4, 6)) / 255.0).astype(np.float32)
    write_rgb(tmp_path / "x.rgb", img)
    np.testing.assert_allclose(read_rgb(tmp_path / "x.rgb", 4, 6), img, atol=1e-7)
    with pytest.raises(FormatError):
        read_rgb(tmp_path / "x.rgb", 4, 5)


def test_corpus_roundtrip(tmp_path):
    corpus = make_corpus(CorpusConfig(n_samples=8, invalid_fraction=0.1))
    save_corpus(corpus, tmp_path)
    back = load_corpus(tmp_path, 0.1, 10.0)
    assert (len(back.train), len(back.val)) == (6, 2)
    for a, b in zip(corpus.samples, back.samples):
        assert a.depth.tobytes() == b.depth.tobytes()
        np.testing.assert_array_equal(a.mask, b.mask)
        assert a.scene_type == b.scene_type
        np.testing.assert_allclose(a.image, b.image, atol=0.5 / 255 + 1e-7)

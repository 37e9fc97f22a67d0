"""WAV I/O tests: round trips, header layout against a struct-level
oracle, quantization rules, and malformed-file rejection."""

import struct

import numpy as np
import pytest

from overiva.errors import CorruptFile, IoFailure, UnsupportedFormat
from overiva.io import AudioBuffer, quantize_pcm16, read_wav, write_wav


def make_buffer(rng, n, channels, rate=16000):
    samples = rng.uniform(-0.9, 0.9, (n, channels))
    return AudioBuffer(rate, samples)


class TestAudioBuffer:
    def test_mono_promoted_to_2d(self):
        buf = AudioBuffer(8000, np.zeros(100))
        assert buf.samples.shape == (100, 1)

    def test_properties(self):
        buf = AudioBuffer(16000, np.zeros((320, 2)))
        assert buf.n_samples == 320
        assert buf.n_channels == 2
        np.testing.assert_allclose(buf.duration, 0.02)


class TestQuantize:
    def test_rounds_half_away_from_zero(self):
        x = np.array([0.5 / 32768, -0.5 / 32768, 1.5 / 32768, -1.5 / 32768])
        np.testing.assert_array_equal(quantize_pcm16(x), [1, -1, 2, -2])

    def test_full_scale_clamps(self):
        np.testing.assert_array_equal(
            quantize_pcm16(np.array([-1.0, 1.0, -2.0, 2.0])),
            [-32768, 32767, -32768, 32767],
        )

    def test_zero_is_zero(self):
        assert quantize_pcm16(np.array([0.0]))[0] == 0


class TestRoundTrips:
    def test_float32_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        buf = make_buffer(rng, 1000, 3)
        path = tmp_path / "a.wav"
        write_wav(path, buf)
        got = read_wav(path)
        assert got.sample_rate == 16000
        np.testing.assert_array_equal(
            got.samples, buf.samples.astype(np.float32).astype(np.float64)
        )

    def test_pcm16_within_one_lsb(self, tmp_path):
        rng = np.random.default_rng(1)
        buf = make_buffer(rng, 500, 2, rate=8000)
        path = tmp_path / "b.wav"
        write_wav(path, buf, sample_format="pcm16")
        got = read_wav(path)
        assert got.sample_rate == 8000
        assert np.abs(got.samples - buf.samples).max() <= 2.0**-15

    def test_pcm16_values_are_exact_quantization(self, tmp_path):
        rng = np.random.default_rng(2)
        buf = make_buffer(rng, 200, 1)
        path = tmp_path / "c.wav"
        write_wav(path, buf, sample_format="pcm16")
        got = read_wav(path)
        expected = quantize_pcm16(buf.samples) / 32768.0
        np.testing.assert_array_equal(got.samples, expected)


class TestHeaderLayout:
    def test_float32_header_fields(self, tmp_path):
        """Check every header field against a struct-level parse."""
        rng = np.random.default_rng(3)
        buf = make_buffer(rng, 100, 3, rate=48000)
        path = tmp_path / "d.wav"
        write_wav(path, buf)
        raw = path.read_bytes()
        assert raw[:4] == b"RIFF" and raw[8:12] == b"WAVE"
        assert struct.unpack("<I", raw[4:8])[0] == len(raw) - 8
        assert raw[12:16] == b"fmt "
        fmt_size = struct.unpack("<I", raw[16:20])[0]
        code, channels, rate, byte_rate, block, bits = struct.unpack(
            "<HHIIHH", raw[20:36]
        )
        assert code == 3 and channels == 3 and rate == 48000
        assert bits == 32 and block == 12 and byte_rate == 48000 * 12
        body = raw[20 + fmt_size :]
        assert body[:4] == b"fact"
        data_pos = raw.find(b"data")
        assert struct.unpack("<I", raw[data_pos + 4 : data_pos + 8])[0] == 100 * 12

    def test_pcm16_header_fields(self, tmp_path):
        buf = AudioBuffer(22050, np.zeros((7, 2)))
        path = tmp_path / "e.wav"
        write_wav(path, buf, sample_format="pcm16")
        raw = path.read_bytes()
        code, channels, rate, byte_rate, block, bits = struct.unpack(
            "<HHIIHH", raw[20:36]
        )
        assert code == 1 and channels == 2 and rate == 22050
        assert bits == 16 and block == 4 and byte_rate == 22050 * 4
        assert len(raw) % 2 == 0

    def test_odd_data_chunk_is_padded(self, tmp_path):
        """A mono pcm16 file with an odd sample count still produces an
        even-length RIFF body."""
        buf = AudioBuffer(8000, np.zeros((3, 1)))
        path = tmp_path / "f.wav"
        write_wav(path, buf, sample_format="pcm16")
        raw = path.read_bytes()
        assert len(raw) % 2 == 0
        got = read_wav(path)
        assert got.n_samples == 3


class TestErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            read_wav(tmp_path / "absent.wav")

    def test_not_riff(self, tmp_path):
        path = tmp_path / "g.wav"
        path.write_bytes(b"not a wave file at all")
        with pytest.raises(CorruptFile):
            read_wav(path)

    def test_truncated_data(self, tmp_path):
        rng = np.random.default_rng(4)
        path = tmp_path / "h.wav"
        write_wav(path, make_buffer(rng, 100, 1))
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 37])
        with pytest.raises(CorruptFile):
            read_wav(path)

    def test_missing_data_chunk(self, tmp_path):
        path = tmp_path / "i.wav"
        fmt = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
        body = b"WAVEfmt " + struct.pack("<I", 16) + fmt
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(CorruptFile):
            read_wav(path)

    def test_unsupported_bit_depth(self, tmp_path):
        """A 64-bit float WAV is well formed but not a supported format."""
        path = tmp_path / "j.wav"
        data = np.zeros(4).tobytes()
        fmt = struct.pack("<HHIIHH", 3, 1, 8000, 64000, 8, 64)
        body = (
            b"WAVEfmt "
            + struct.pack("<I", 16)
            + fmt
            + b"data"
            + struct.pack("<I", len(data))
            + data
        )
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(UnsupportedFormat):
            read_wav(path)

    def test_unknown_format_code(self, tmp_path):
        path = tmp_path / "k.wav"
        fmt = struct.pack("<HHIIHH", 7, 1, 8000, 8000, 1, 8)
        body = (
            b"WAVEfmt "
            + struct.pack("<I", 16)
            + fmt
            + b"data"
            + struct.pack("<I", 0)
        )
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(UnsupportedFormat):
            read_wav(path)

    def test_write_failure_is_io_error(self, tmp_path):
        buf = AudioBuffer(8000, np.zeros((4, 1)))
        with pytest.raises(IoFailure):
            write_wav(tmp_path / "no" / "such" / "dir.wav", buf)

    def test_unknown_sample_format_rejected(self, tmp_path):
        buf = AudioBuffer(8000, np.zeros((4, 1)))
        with pytest.raises(ValueError):
            write_wav(tmp_path / "l.wav", buf, sample_format="pcm24")

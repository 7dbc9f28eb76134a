import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dfngan import audio
from dfngan.audio import Signal
from dfngan.errors import MalformedWav, ShapeMismatch, SignalTooShort, UnsupportedEncoding, ZeroPowerGenerated

SR = 16000


def tone(f, dur=1.0, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(int(round(dur * sr))) / sr
    return Signal(amp * np.sin(2 * np.pi * f * t + phase), sr)


def peak_hz(s: Signal):
    x = np.asarray(s.samples)
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    return np.fft.rfftfreq(len(x), 1 / s.sample_rate)[int(np.argmax(spec))]


def rel_err(x, y):
    n = min(len(x), len(y))
    return np.linalg.norm(x[:n] - y[:n]) / np.linalg.norm(x[:n])


def _write_raw(path, frames: bytes, channels=1, width=2, rate=SR):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(frames)


# WAV ingestion

def test_zero_file_loads_as_silence(tmp_path):
    p = tmp_path / "z.wav"
    _write_raw(p, b"\x00\x00" * 100, rate=22050)
    s = audio.load_wav(p)
    assert s.sample_rate == 22050 and len(s.samples) == 100 and not np.any(s.samples)


def test_full_scale_maps_near_one(tmp_path):
    p = tmp_path / "f.wav"
    _write_raw(p, struct.pack("<3h", 32767, -32768, 0))
    s = audio.load_wav(p)
    assert abs(s.samples[0] - 1.0) < 1e-4
    assert s.samples[1] == -1.0


def test_stereo_is_channel_averaged(tmp_path):
    p = tmp_path / "s.wav"
    _write_raw(p, struct.pack("<2h", 16384, -16384) * 50, channels=2)
    s = audio.load_wav(p)
    assert len(s.samples) == 50 and np.all(s.samples == 0.0)


@pytest.mark.parametrize("bits", [8, 16, 24])
def test_write_then_load(tmp_path, bits):
    s = tone(440, 0.1)
    audio.write_wav(tmp_path / "t.wav", s, bits=bits)
    back = audio.load_wav(tmp_path / "t.wav")
    assert np.abs(back.samples - s.samples).max() < 2.0 ** -(bits - 2)


def test_garbage_is_malformed(tmp_path):
    p = tmp_path / "g.wav"
    p.write_bytes(b"this is not a wav file at all")
    with pytest.raises(MalformedWav):
        audio.load_wav(p)


def test_32_bit_and_float_are_unsupported(tmp_path):
    p = tmp_path / "w32.wav"
    _write_raw(p, b"\x00" * 40, width=4)
    with pytest.raises(UnsupportedEncoding):
        audio.load_wav(p)
    # IEEE float header: format tag 3
    fmt = struct.pack("<HHIIHH", 3, 1, SR, SR * 4, 4, 32)
    data = b"\x00" * 16
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    q = tmp_path / "f32.wav"
    q.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(UnsupportedEncoding):
        audio.load_wav(q)


# resampling and pitch

def test_same_rate_is_bit_identical():
    s = tone(300, 0.05)
    np.testing.assert_array_equal(audio.resample(s, SR).samples, s.samples)


def test_downsampled_tone_keeps_frequency_and_amplitude():
    s = tone(1000, 1.0, sr=48000, amp=1.0)
    y = audio.resample(s, 16000)
    assert abs(len(y.samples) - 16000) <= 1
    assert abs(peak_hz(y) - 1000) < 1.0
    mid = y.samples[1000:-1000]
    assert abs(np.sqrt(2 * np.mean(mid ** 2)) - 1.0) < 0.01


def test_dc_passes():
    y = audio.resample(Signal(np.full(4410, 0.3), 44100), 16000)
    assert np.abs(y.samples - 0.3).max() < 1e-3


@pytest.mark.parametrize("src, dst", [(44100, 16000), (8000, 16000), (22050, 16000)])
def test_duration_preserved_within_one_sample(src, dst):
    s = Signal(np.zeros(12345), src)
    y = audio.resample(s, dst)
    assert abs(len(y.samples) / dst - len(s.samples) / src) <= 1.0 / dst


def test_pitch_shift_identity():
    s = tone(700, 0.2)
    np.testing.assert_array_equal(audio.pitch_shift(s, 1.0).samples, s.samples)


@pytest.mark.parametrize("scale", audio.PITCH_SCALES)
def test_pitch_shift_moves_tone(scale):
    s = tone(1000, 1.0)
    y = audio.pitch_shift(s, scale)
    assert y.sample_rate == SR
    assert abs(peak_hz(y) - 1000 * scale) <= 0.02 * 1000 * scale
    assert abs(len(y.samples) - len(s.samples) / scale) <= 1


# wavelet transform

def test_zero_signal_gives_zero_magnitude():
    c = audio.cwt_morlet(Signal(np.zeros(4000), SR))
    assert not np.any(c.magnitude)


def test_framing_and_scale_layout():
    c = audio.cwt_morlet(Signal(np.zeros(16000), SR), n_scales=24)
    assert c.frame_len == 800 and c.frame_hop == 400
    assert c.magnitude.shape == (24, 1 + (16000 - 800) // 400)
    f = c.scale_frequencies
    assert f[0] == 40.0 and abs(f[-1] - 0.95 * 8000) < 1e-9
    assert np.all(np.diff(np.log(f)) > 0)
    np.testing.assert_allclose(np.diff(np.log(f)), np.log(f[1] / f[0]))


def test_too_short_signal():
    with pytest.raises(SignalTooShort):
        audio.cwt_morlet(Signal(np.zeros(100), SR))


def test_tone_lands_on_nearest_row():
    c = audio.cwt_morlet(tone(1000), n_scales=32)
    row = int(np.argmin(np.abs(np.log(c.scale_frequencies / 1000))))
    interior = c.magnitude[:, 2:-2]
    hits = np.mean(np.argmax(interior, axis=0) == row)
    assert hits >= 0.95


@pytest.mark.parametrize("f", [150.0, 640.0, 2500.0, 5100.0])
def test_tone_localization_within_one_scale_step(f):
    c = audio.cwt_morlet(tone(f, 0.5), n_scales=32)
    steps = np.log(c.scale_frequencies)
    top = np.argmax(c.magnitude[:, c.magnitude.shape[1] // 2])
    assert abs(steps[top] - math.log(f)) <= steps[1] - steps[0]


def test_two_tones_give_two_maxima():
    s = Signal(tone(500).samples + tone(2000).samples, SR)
    c = audio.cwt_morlet(s, n_scales=32)
    col = c.magnitude[:, c.magnitude.shape[1] // 2]
    # ignore leakage ripples far below either tone
    peaks = [j for j in range(1, len(col) - 1)
             if col[j] > col[j - 1] and col[j] > col[j + 1] and col[j] > 0.1 * col.max()]
    got = sorted(c.scale_frequencies[peaks])
    assert len(got) == 2
    for want, g in zip((500, 2000), got):
        assert abs(math.log(g / want)) <= math.log(c.scale_frequencies[1] / c.scale_frequencies[0])


def test_coefficients_match_direct_convolution_sum(rng):
    x = rng.standard_normal(4000)
    c = audio.cwt_morlet(Signal(x, SR), n_scales=32)
    coef = c.magnitude * np.exp(1j * c.phase)
    m = np.arange(len(x))
    # rows above ~2.5 kHz are skipped: there the sampled wavelet aliases and
    # the direct sum stops being a faithful reference
    for j in range(0, 25, 4):
        a = 6.0 / (2 * np.pi * c.scale_frequencies[j])
        for col in (0, 3, 8):
            n = col * c.frame_hop + c.frame_len // 2
            direct = np.sum(x * np.conj(audio.morlet((m - n) / (a * SR)))) / (a * SR)
            assert abs(direct - coef[j, col]) <= 1e-10 * abs(direct)


def test_linearity(rng):
    x1, x2 = rng.standard_normal(3000), rng.standard_normal(3000)
    c = lambda x: (lambda r: r.magnitude * np.exp(1j * r.phase))(audio.cwt_morlet(Signal(x, SR)))
    lhs = c(2.0 * x1 - 0.5 * x2)
    rhs = 2.0 * c(x1) - 0.5 * c(x2)
    assert np.abs(lhs - rhs).max() <= 1e-8 * np.abs(rhs).max()


# magnitude views

def _cs(mag, phase=None):
    mag = np.asarray(mag, dtype=float)
    return audio.ComplexSpectrogram(mag, np.zeros_like(mag) if phase is None else phase,
                                    np.geomspace(40, 7600, mag.shape[0]), 400, 800, SR, 4000)


@pytest.mark.parametrize("kind", audio.SCALE_KINDS)
def test_zero_view(kind):
    assert not np.any(audio.magnitude_view(_cs(np.zeros((4, 5))), kind).data)


def test_log_view_of_e_minus_one():
    m = np.zeros((3, 3))
    m[1, 2] = math.e - 1
    v = audio.magnitude_view(_cs(m), "log").data
    assert abs(v[1, 2] - 1.0) < 1e-15 and np.count_nonzero(v) == 1


def test_linear_view_is_identity(rng):
    m = rng.random((6, 7))
    np.testing.assert_array_equal(audio.magnitude_view(_cs(m), "linear").data, m)


def test_log_real_view(rng):
    m, ph = rng.random((4, 4)), rng.uniform(-np.pi, np.pi, (4, 4))
    v = audio.magnitude_view(_cs(m, ph), "logRe", phase_ref="p.dfnt")
    np.testing.assert_allclose(v.data, np.log1p(np.abs(m * np.cos(ph))), rtol=1e-15)
    assert v.scale_kind == "logRe" and v.phase_ref == "p.dfnt"


@given(st.lists(st.floats(0, 1e3), min_size=2, max_size=20))
def test_views_are_monotone(vals):
    m = np.array(vals)[None, :]
    order = np.argsort(m[0], kind="stable")
    for kind in ("linear", "log"):
        v = audio.magnitude_view(_cs(m), kind).data[0]
        assert np.all(np.diff(v[order]) >= 0)


@pytest.mark.parametrize("kind", ["linear", "log"])
def test_view_inverse(rng, kind):
    m = rng.random((5, 5)) * 3
    back = audio.view_to_magnitude(audio.magnitude_view(_cs(m), kind).data, kind)
    np.testing.assert_allclose(back, m, rtol=1e-12, atol=1e-15)


# bilinear resize

def test_resize_constant():
    np.testing.assert_allclose(audio.resize_bilinear(np.full((5, 9), 2.5), 16), 2.5)


def test_resize_midpoint():
    out = audio.resize_bilinear(np.array([[0.0, 1.0], [2.0, 3.0]]), 3)
    assert out[1, 1] == 1.5
    np.testing.assert_array_equal(out[[0, 0, -1, -1], [0, -1, 0, -1]], [0, 1, 2, 3])


@given(st.integers(2, 40), st.integers(2, 40), st.integers(2, 40), st.integers(2, 40),
       st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_resize_reproduces_affine_fields(r, c, n, m, a, b, k):
    i, j = np.meshgrid(np.arange(r), np.arange(c), indexing="ij")
    out = audio.resize_bilinear(a * i + b * j + k, n, m)
    ii, jj = np.meshgrid(np.linspace(0, r - 1, n), np.linspace(0, c - 1, m), indexing="ij")
    assert np.abs(out - (a * ii + b * jj + k)).max() <= 1e-9 * (1 + abs(a) * r + abs(b) * c + abs(k))


def test_resize_ramp_round_trip():
    ramp = np.add.outer(np.linspace(0, 1, 17), np.linspace(0, 2, 17))
    back = audio.resize_bilinear(audio.resize_bilinear(ramp, 33), 17)
    assert np.abs(back - ramp).max() <= 1e-6


def test_resize_stays_within_range(rng):
    a = rng.standard_normal((7, 13))
    out = audio.resize_bilinear(a, 32)
    assert out.min() >= a.min() and out.max() <= a.max()


def test_resize_keeps_provenance():
    sp = audio.Spectrogram(np.ones((4, 6)), "log", source="x.wav", phase_ref="x.dfnt")
    out = audio.resize_bilinear(sp, 8)
    assert out.n == 8 and out.scale_kind == "log" and out.phase_ref == "x.dfnt"
    with pytest.raises(ValueError):
        audio.resize_bilinear(sp, 1)


# inversion

def _round_trip(s, **kw):
    c = audio.cwt_morlet(s, **kw)
    back = audio.invert_cwt(c.magnitude, c.phase, c.scale_frequencies, c.frame_hop, sample_rate=c.sample_rate,
                            frame_len=c.frame_len, n_samples=c.n_samples, omega0=c.omega0)
    return back.samples


@pytest.mark.parametrize("f", [200.0, 500.0, 1000.0, 1234.5, 3000.0])
def test_tone_round_trip(f):
    s = tone(f, 1.0, phase=0.3)
    back = _round_trip(s, n_scales=32)
    # the first and last half-frame lie outside the frame centres
    sl = slice(800, -800)
    assert rel_err(s.samples[sl], back[sl]) <= 0.05


def test_zero_magnitude_inverts_to_silence():
    out = audio.invert_cwt(np.zeros((8, 10)), np.ones((8, 10)), np.geomspace(40, 7600, 8), 400)
    assert not np.any(out.samples)


def test_band_limited_noise_round_trip(rng):
    # The default 400-sample hop cannot carry broadband noise (two numbers
    # per scale per 25 ms); a hop of one sample can.
    n = 4000
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / SR)
    spec[(f < 200) | (f > 3000)] = 0
    x = np.fft.irfft(spec, n)
    x /= np.abs(x).max()
    back = _round_trip(Signal(x, SR), frame_ms=0.125, overlap=0.0, n_scales=64)
    sl = slice(400, -400)
    assert rel_err(x[sl], back[sl]) <= 0.10


def test_inversion_shape_checks():
    with pytest.raises(ShapeMismatch):
        audio.invert_cwt(np.ones((4, 5)), np.ones((4, 6)), np.geomspace(40, 7600, 4), 400)
    with pytest.raises(ShapeMismatch):
        audio.invert_cwt(np.ones((4, 5)), np.ones((4, 5)), np.geomspace(40, 7600, 3), 400)


# power and SNR

def test_power_closed_forms():
    sq = np.tile([1.0, -1.0], 500)
    assert audio.power(sq) == 1.0
    t = np.arange(16000) / SR
    assert abs(audio.power(0.7 * np.sin(2 * np.pi * 100 * t)) - 0.49 / 2) < 1e-3
    assert audio.power(np.zeros(10)) == 0.0
    with pytest.raises(ValueError):
        audio.power(np.array([]))


def test_snr_values(rng):
    x = rng.standard_normal(1000)
    assert audio.snr_db(x, x) == 0.0
    assert abs(audio.snr_db(np.sqrt(10) * x, x) - 20.0) < 1e-12
    assert abs(audio.snr_db(x, np.sqrt(10) * x) + 20.0) < 1e-12
    for c in (0.3, -2.0, 7.0):
        assert abs(audio.snr_db(x, c * x) + 40 * math.log10(abs(c))) < 1e-12
    with pytest.raises(ZeroPowerGenerated):
        audio.snr_db(x, np.zeros(1000))


def test_png_export(tmp_path):
    audio.save_png(np.arange(64.0).reshape(8, 8), tmp_path / "a.png")
    assert (tmp_path / "a.png").read_bytes()[:4] == b"\x89PNG"

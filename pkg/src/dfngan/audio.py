"""Audio ingestion, complex Morlet spectrograms, views, inversion and SNR."""

from __future__ import annotations

import logging
import wave
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import integrate

from .errors import (
    MalformedWav,
    ShapeMismatch,
    SignalTooShort,
    UnsupportedEncoding,
    ZeroPowerGenerated,
)

log = logging.getLogger(__name__)

SCALE_KINDS = ("linear", "log", "logRe")
PITCH_SCALES = (0.75, 0.9, 1.15, 1.5)


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    """Morlet coefficients sampled at frame centres (rows low to high frequency)."""

    magnitude: np.ndarray
    phase: np.ndarray
    scale_frequencies: np.ndarray
    frame_hop: int
    frame_len: int
    sample_rate: float
    n_samples: int
    omega0: float = 6.0

    @property
    def coefficients(self) -> np.ndarray:
        return self.magnitude * np.exp(1j * self.phase)


@dataclass(frozen=True)
class Spectrogram:
    data: np.ndarray
    scale_kind: str
    source: str = ""
    phase_ref: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.data.shape[0]


# -- WAV ---------------------------------------------------------------------

def load_wav(path) -> Signal:
    """Read 8/16/24-bit PCM WAV as a mono signal in [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as w:
            nch = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedEncoding(f"{path}: {msg}") from exc
        raise MalformedWav(f"{path}: {msg}") from exc
    except (EOFError, ValueError) as exc:
        raise MalformedWav(f"{path}: {exc}") from exc
    if width not in (1, 2, 3):
        raise UnsupportedEncoding(f"{path}: {8 * width}-bit PCM is not supported")
    if nch < 1 or rate <= 0:
        raise MalformedWav(f"{path}: bad header")
    usable = len(raw) - len(raw) % (width * nch)
    buf = np.frombuffer(raw[:usable], dtype=np.uint8)
    if width == 1:
        x = (buf.astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        x = buf.view("<i2").astype(np.float64) / 32768.0
    else:
        b = buf.reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        x = v.astype(np.float64) / float(1 << 23)
    x = x.reshape(-1, nch).mean(axis=1)
    return Signal(np.clip(x, -1.0, 1.0), float(rate))


def write_wav(path, signal: Signal, bits: int = 16) -> None:
    if bits not in (8, 16, 24):
        raise UnsupportedEncoding(f"{bits}-bit output is not supported")
    x = np.clip(np.asarray(signal.samples, dtype=float), -1.0, 1.0)
    if bits == 8:
        data = np.round(x * 127.0 + 128.0).astype(np.uint8).tobytes()
    elif bits == 16:
        data = np.round(x * 32767.0).astype("<i2").tobytes()
    else:
        v = np.round(x * ((1 << 23) - 1)).astype(np.int32)
        data = np.stack([v & 0xFF, (v >> 8) & 0xFF, (v >> 16) & 0xFF], axis=1).astype(np.uint8).tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(bits // 8)
        w.setframerate(int(round(signal.sample_rate)))
        w.writeframes(data)


# -- resampling --------------------------------------------------------------

def resample(s: Signal, target_hz: float, taps: int = 64) -> Signal:
    """Band-limited resampling with a Blackman-windowed sinc kernel.

    Each output sample mixes ``taps`` neighbouring inputs; the kernel rows are
    renormalised to unit sum so DC passes exactly, and the signal is
    edge-extended at both ends.
    """
    if target_hz <= 0:
        raise ValueError("target rate must be positive")
    x = np.asarray(s.samples, dtype=float)
    if target_hz == s.sample_rate:
        return Signal(x.copy(), s.sample_rate)
    ratio = float(target_hz) / s.sample_rate
    n_out = int(round(len(x) * ratio))
    if n_out == 0 or len(x) == 0:
        return Signal(np.zeros(n_out), float(target_hz))
    cutoff = min(1.0, ratio)
    half = taps // 2
    t = np.arange(n_out) / ratio
    base = np.floor(t).astype(np.int64)
    k = base[:, None] + np.arange(-half + 1, half + 1)[None, :]
    u = t[:, None] - k
    win = 0.42 + 0.5 * np.cos(np.pi * u / half) + 0.08 * np.cos(2 * np.pi * u / half)
    win[np.abs(u) >= half] = 0.0
    h = cutoff * np.sinc(cutoff * u) * win
    h /= h.sum(axis=1, keepdims=True)
    y = np.sum(h * x[np.clip(k, 0, len(x) - 1)], axis=1)
    return Signal(y, float(target_hz))


def pitch_shift(s: Signal, scale: float) -> Signal:
    """Shift pitch by ``scale``; duration changes by ``1/scale``."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    if scale == 1.0:
        return Signal(np.asarray(s.samples, dtype=float).copy(), s.sample_rate)
    y = resample(s, s.sample_rate / scale)
    return Signal(y.samples, s.sample_rate)


# -- complex Morlet transform -------------------------------------------------

def morlet(t, omega0: float = 6.0):
    """Mother wavelet ``pi^-1/4 exp(i w0 t) exp(-t^2/2)``."""
    t = np.asarray(t, dtype=float)
    return np.pi ** -0.25 * np.exp(1j * omega0 * t) * np.exp(-0.5 * t * t)


def morlet_ft(w, omega0: float = 6.0):
    """Fourier transform of :func:`morlet` (real-valued)."""
    w = np.asarray(w, dtype=float)
    return np.pi ** -0.25 * np.sqrt(2.0 * np.pi) * np.exp(-0.5 * (w - omega0) ** 2)


def scale_frequencies(n_scales: int, sample_rate: float, f_min: float = 40.0,
                      f_max: float | None = None) -> np.ndarray:
    if f_max is None:
        f_max = 0.95 * sample_rate / 2.0
    if n_scales == 1:
        return np.array([float(f_min)])
    return np.geomspace(f_min, f_max, n_scales)


def frame_geometry(n_samples: int, sample_rate: float, frame_ms: float, overlap: float):
    frame_len = max(1, int(round(frame_ms * sample_rate / 1000.0)))
    hop = max(1, int(round(frame_len * (1.0 - overlap))))
    if n_samples < frame_len:
        raise SignalTooShort(f"{n_samples} samples is shorter than one {frame_len}-sample frame")
    n_frames = 1 + (n_samples - frame_len) // hop
    centres = np.arange(n_frames) * hop + frame_len // 2
    return frame_len, hop, centres


def _cwt_full(x: np.ndarray, sample_rate: float, freqs: np.ndarray, omega0: float) -> np.ndarray:
    """Coefficients at every sample: ``(1/a) sum_m x[m] conj(psi((m-n)/(a fs))) / fs``."""
    scales = omega0 / (2.0 * np.pi * freqs)
    pad = int(np.ceil(5.0 * scales.max() * sample_rate)) + 1
    nfft = sfft.next_fast_len(len(x) + 2 * pad)
    spec = sfft.fft(x, nfft)
    w = 2.0 * np.pi * sfft.fftfreq(nfft, d=1.0 / sample_rate)
    out = sfft.ifft(spec[None, :] * morlet_ft(scales[:, None] * w[None, :], omega0), axis=1)
    return out[:, :len(x)]


def cwt_morlet(s: Signal, frame_ms: float = 50.0, overlap: float = 0.5, n_scales: int = 32,
               omega0: float = 6.0, f_min: float = 40.0, f_max: float | None = None) -> ComplexSpectrogram:
    """Frame-wise complex Morlet transform.

    Scales are log-spaced between ``f_min`` and ``0.95 * Nyquist``; a scale
    ``a`` has centre frequency ``omega0 / (2 pi a)``. Each column holds the
    coefficients at the centre of one frame, frames advancing by
    ``frame * (1 - overlap)`` samples.
    """
    x = np.asarray(s.samples, dtype=float)
    frame_len, hop, centres = frame_geometry(len(x), s.sample_rate, frame_ms, overlap)
    freqs = scale_frequencies(n_scales, s.sample_rate, f_min, f_max)
    coef = _cwt_full(x, s.sample_rate, freqs, omega0)[:, centres]
    return ComplexSpectrogram(
        magnitude=np.abs(coef),
        phase=np.angle(coef),
        scale_frequencies=freqs,
        frame_hop=hop,
        frame_len=frame_len,
        sample_rate=float(s.sample_rate),
        n_samples=len(x),
        omega0=omega0,
    )


# -- views -------------------------------------------------------------------

def magnitude_view(c: ComplexSpectrogram, kind: str, source: str = "",
                   phase_ref: str | None = None) -> Spectrogram:
    if kind == "linear":
        data = c.magnitude.copy()
    elif kind == "log":
        data = np.log1p(c.magnitude)
    elif kind == "logRe":
        data = np.log1p(np.abs(c.magnitude * np.cos(c.phase)))
    else:
        raise ValueError(f"unknown scale kind {kind!r}")
    meta = {
        "sample_rate": c.sample_rate,
        "frame_hop": c.frame_hop,
        "frame_len": c.frame_len,
        "n_samples": c.n_samples,
        "omega0": c.omega0,
        "scale_frequencies": [float(f) for f in c.scale_frequencies],
        "shape_raw": list(c.magnitude.shape),
    }
    return Spectrogram(data=data, scale_kind=kind, source=source, phase_ref=phase_ref, meta=meta)


def view_to_magnitude(data: np.ndarray, kind: str, phase: np.ndarray | None = None,
                      max_gain: float = 10.0) -> np.ndarray:
    """Best-effort inverse of :func:`magnitude_view`.

    ``logRe`` loses the imaginary part; with a phase reference the magnitude
    is recovered as ``|Re| / |cos(phase)|`` with the gain capped at
    ``max_gain``.
    """
    data = np.asarray(data, dtype=float)
    if kind == "linear":
        return np.clip(data, 0.0, None)
    mag = np.expm1(np.clip(data, 0.0, None))
    if kind == "log":
        return mag
    if kind == "logRe":
        if phase is None:
            return mag
        return mag / np.maximum(np.abs(np.cos(phase)), 1.0 / max_gain)
    raise ValueError(f"unknown scale kind {kind!r}")


def resize_bilinear(sp, n: int, m: int | None = None):
    """Corner-aligned bilinear resize to ``n x n`` (or ``n x m``).

    Accepts a 2-D array or a :class:`Spectrogram` and returns the same type.
    """
    if n < 2 or (m is not None and m < 2):
        raise ValueError("target side must be at least 2")
    m = n if m is None else m
    arr = sp.data if isinstance(sp, Spectrogram) else np.asarray(sp, dtype=float)
    rows, cols = arr.shape

    def axis_coords(src, dst):
        if src == 1:
            return np.zeros(dst, dtype=np.int64), np.zeros(dst, dtype=np.int64), np.zeros(dst)
        pos = np.linspace(0.0, src - 1.0, dst)
        i0 = np.minimum(np.floor(pos).astype(np.int64), src - 2)
        return i0, i0 + 1, pos - i0

    r0, r1, fr = axis_coords(rows, n)
    c0, c1, fc = axis_coords(cols, m)
    top = arr[r0][:, c0] * (1 - fc) + arr[r0][:, c1] * fc
    bot = arr[r1][:, c0] * (1 - fc) + arr[r1][:, c1] * fc
    out = top * (1 - fr)[:, None] + bot * fr[:, None]
    if isinstance(sp, Spectrogram):
        return replace(sp, data=out)
    return out


# -- inversion ---------------------------------------------------------------

@lru_cache(maxsize=16)
def _admissibility(omega0: float) -> float:
    """``int psi_hat(w) / w dw`` over the wavelet's passband.

    The Morlet transform is not exactly zero at DC, so the lower limit stops
    at ``omega0 / 50`` where the integrand is already below 1e-7.
    """
    val, _ = integrate.quad(lambda w: float(morlet_ft(w, omega0)) / w,
                            omega0 / 50.0, omega0 + 12.0, limit=200)
    return val


def _log_scale_widths(freqs: np.ndarray) -> np.ndarray:
    lf = np.log(freqs)
    if len(lf) == 1:
        return np.ones(1)
    d = np.diff(lf)
    w = np.empty(len(lf))
    w[0], w[-1] = d[0], d[-1]
    w[1:-1] = 0.5 * (d[1:] + d[:-1])
    return w


def _frequency_estimate(mag: np.ndarray, scales: np.ndarray, omega0: float) -> np.ndarray:
    """Per-cell angular frequency from the log-magnitude profile across scales.

    For a tone of angular frequency w, ``ln|W(a)| = c + w w0 a - w^2 a^2 / 2``;
    a quadratic fit in ``a`` over three neighbouring scales recovers ``w``.
    """
    n_scales = len(scales)
    est = np.empty_like(mag)
    if n_scales < 3:
        est[:] = (omega0 / scales)[:, None]
        return est
    logm = np.log(mag + 1e-300)
    for j in range(n_scales):
        c = min(max(j, 1), n_scales - 2)
        a = scales[c - 1:c + 2]
        vand = np.stack([np.ones(3), a, a * a], axis=1)
        coef = np.linalg.solve(vand, logm[c - 1:c + 2])
        est[j] = coef[1] / omega0
    # fall back to the scale's centre frequency where the fit is meaningless
    nominal = (omega0 / scales)[:, None]
    bad = ~np.isfinite(est) | (est <= 0)
    est[bad] = np.broadcast_to(nominal, est.shape)[bad]
    return est


def invert_cwt(magnitude, phase_ref, scale_frequencies, frame_hop: int, *,
               sample_rate: float = 16000.0, frame_len: int | None = None,
               n_samples: int | None = None, omega0: float = 6.0) -> Signal:
    """Single-pass inverse of :func:`cwt_morlet`.

    Between frame centres each scale's coefficient is continued with a
    phase-coherent linear chirp: its frequency comes from the cross-scale
    magnitude fit and is snapped to the measured phase step between frames,
    so the continuation is exact for steady tones. The real parts are then
    summed over scales with the Morlet admissibility weights.
    """
    mag = np.asarray(magnitude, dtype=float)
    ph = np.asarray(phase_ref, dtype=float)
    if mag.shape != ph.shape:
        raise ShapeMismatch(f"magnitude {mag.shape} vs phase {ph.shape}")
    freqs = np.asarray(scale_frequencies, dtype=float)
    if mag.ndim != 2 or mag.shape[0] != len(freqs):
        raise ShapeMismatch("magnitude rows must match the scale frequencies")
    hop = int(frame_hop)
    if frame_len is None:
        frame_len = 2 * hop
    n_scales, n_frames = mag.shape
    centres = np.arange(n_frames) * hop + frame_len // 2
    if n_samples is None:
        n_samples = (n_frames - 1) * hop + frame_len
    dt = 1.0 / sample_rate
    scales = omega0 / (2.0 * np.pi * freqs)
    weights = 2.0 * _log_scale_widths(freqs) / _admissibility(omega0)

    if not np.any(mag):
        return Signal(np.zeros(n_samples), sample_rate)

    w_est = _frequency_estimate(mag, scales, omega0)
    if n_frames > 1:
        dphi = np.diff(ph, axis=1)
        w_bar = 0.5 * (w_est[:, 1:] + w_est[:, :-1])
        span = hop * dt
        wraps = np.round((w_bar * span - dphi) / (2.0 * np.pi))
        w_int = (dphi + 2.0 * np.pi * wraps) / span
    else:
        w_int = w_est[:, :1]

    t = np.arange(n_samples)
    k = np.clip((t - centres[0]) // hop, 0, max(n_frames - 2, 0)).astype(np.int64)
    if n_frames == 1:
        amp = np.repeat(mag[:, :1], n_samples, axis=1)
        phase = ph[:, :1] + w_int[:, :1] * (t - centres[0])[None, :] * dt
    else:
        u = np.clip((t - centres[k]) / hop, 0.0, 1.0)
        amp = mag[:, k] * (1.0 - u) + mag[:, k + 1] * u
        phase = ph[:, k] + w_int[:, k] * (t - centres[k])[None, :] * dt
    band = amp * np.cos(phase)
    return Signal(weights @ band, sample_rate)


# -- power and SNR -----------------------------------------------------------

def power(s) -> float:
    x = np.asarray(s.samples if isinstance(s, Signal) else s, dtype=float)
    if x.size == 0:
        raise ValueError("empty signal")
    return float(np.mean(x * x))


def snr_db(x_recon_real, x_gen) -> float:
    """``20 log10(Pw(reconstructed real) / Pw(generated))``."""
    p_real = power(x_recon_real)
    p_gen = power(x_gen)
    if p_gen <= 0.0:
        raise ZeroPowerGenerated("generated signal has zero power")
    if p_real <= 0.0:
        return float("-inf")
    return float(20.0 * np.log10(p_real / p_gen))


def save_png(data, path) -> None:
    """Grayscale min-max normalised image, low frequencies at the bottom."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    arr = np.asarray(data.data if isinstance(data, Spectrogram) else data, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    norm = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    plt.imsave(str(path), norm[::-1], cmap="gray", vmin=0.0, vmax=1.0)

"""Audio ingestion, MFCC front end, and the binary feature-archive format.

The archive layout (all integers little-endian):

    magic "PMA1" | version u16 (=1) | dims u32 | frame_period_us u32
    | entry_count u64
    | index: entry_count * { id_length u16, id UTF-8, frame_count u32,
                             byte_offset u64 }
    | payload: concatenated float32 row-major frame data

``byte_offset`` is relative to the start of the payload region.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct
from scipy.io import wavfile

from .errors import (
    ArchiveError,
    AudioError,
    BadMagicError,
    TruncatedArchiveError,
    UnknownStimulusError,
)

MAGIC = b"PMA1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHIIQ")
_INDEX_HEAD = struct.Struct("<H")
_INDEX_TAIL = struct.Struct("<IQ")

# Peak amplitudes for normalizing integer PCM to [-1, 1].
_PCM_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,  # scipy loads 24-bit PCM left-justified here
}


@dataclass
class AudioBuffer:
    """Mono (after ingestion) audio with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    channels: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioError("audio samples must all be finite")

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate


@dataclass(frozen=True)
class MfccConfig:
    window_length: float = 0.025
    stride: float = 0.010
    num_coefficients: int = 13
    num_mel_filters: int = 40
    fft_size: int = 512
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.num_coefficients > self.num_mel_filters:
            raise ValueError("num_coefficients must not exceed num_mel_filters")
        if not (self.window_length >= self.stride > 0):
            raise ValueError("need window_length >= stride > 0")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


@dataclass
class FeatureMatrix:
    """One stimulus' representation: frames x dims, plus frame timing."""

    stimulus_id: str
    data: np.ndarray
    frame_period: float

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(
                f"feature matrix for {self.stimulus_id!r} must be 2-D and nonempty, "
                f"got shape {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"feature matrix for {self.stimulus_id!r} has non-finite values")
        if self.frame_period <= 0:
            raise ValueError("frame_period must be positive")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]


def read_wav(path) -> AudioBuffer:
    """Read a PCM WAV file, normalize to [-1, 1], and average channels to mono."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioError(f"cannot read WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise AudioError(f"zero-length audio in {path}")

    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in _PCM_SCALE:
        samples = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"unsupported WAV sample encoding {data.dtype} in {path}")

    if samples.ndim > 1:
        samples = samples.mean(axis=1)
    if not np.all(np.isfinite(samples)):
        raise AudioError(f"non-finite samples in {path}")
    return AudioBuffer(samples=samples, sample_rate=int(rate), channels=1)


def resample_linear(audio: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Resample by linear interpolation.

    Output length is fixed as round(n * target_rate / sample_rate); positions
    past the last input sample hold its value.
    """
    if target_rate <= 0:
        raise AudioError(f"target_rate must be positive, got {target_rate}")
    if target_rate == audio.sample_rate:
        return AudioBuffer(audio.samples.copy(), audio.sample_rate)

    n = audio.samples.shape[0]
    m = int(round(n * target_rate / audio.sample_rate))
    if m < 1:
        m = 1
    pos = np.arange(m, dtype=np.float64) * (audio.sample_rate / target_rate)
    pos = np.minimum(pos, n - 1.0)
    idx = np.floor(pos).astype(np.int64)
    idx_hi = np.minimum(idx + 1, n - 1)
    frac = pos - idx
    out = audio.samples[idx] * (1.0 - frac) + audio.samples[idx_hi] * frac
    return AudioBuffer(out, target_rate)


def hann_window(length: int) -> np.ndarray:
    # periodic form, the STFT convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def _hz_to_mel(hz):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    hz = np.asarray(hz, dtype=np.float64)
    mel = hz / (200.0 / 3.0)
    log_region = hz >= 1000.0
    mel = np.where(log_region, 15.0 + np.log(np.maximum(hz, 1000.0) / 1000.0) / (np.log(6.4) / 27.0), mel)
    return mel


def _mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    hz = mel * (200.0 / 3.0)
    log_region = mel >= 15.0
    hz = np.where(log_region, 1000.0 * np.exp((mel - 15.0) * (np.log(6.4) / 27.0)), hz)
    return hz


def mel_filterbank(num_filters: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Slaney-style triangular filters spanning 0 to Nyquist.

    Returns (num_filters, fft_size // 2 + 1) weights, each filter scaled to
    unit area (2 / bandwidth).
    """
    nyquist = sample_rate / 2.0
    mel_edges = np.linspace(_hz_to_mel(0.0), _hz_to_mel(nyquist), num_filters + 2)
    hz_edges = _mel_to_hz(mel_edges)
    bin_freqs = np.fft.rfftfreq(fft_size, d=1.0 / sample_rate)

    fdiff = np.diff(hz_edges)
    ramps = hz_edges[:, None] - bin_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (hz_edges[2:] - hz_edges[:-2]))[:, None]
    return weights


def compute_mfcc(audio: AudioBuffer, config: MfccConfig = MfccConfig(), *,
                 stimulus_id: str = "") -> FeatureMatrix:
    """MFCCs of a mono buffer.

    Per frame: Hann window -> magnitude-squared FFT -> Slaney mel filterbank
    -> log with floor -> orthonormal DCT-II, keeping the first
    ``num_coefficients`` coefficients (the 0th included). Frames are laid out
    with no padding or centering, so
    T = (n_samples - window_samples) // stride_samples + 1.
    """
    if audio.channels != 1 or audio.samples.ndim != 1:
        raise AudioError("compute_mfcc expects mono audio; ingest through read_wav first")
    rate = audio.sample_rate
    win = int(round(config.window_length * rate))
    hop = int(round(config.stride * rate))
    n = audio.samples.shape[0]
    if n < win:
        raise AudioError(
            f"audio of {n} samples is shorter than one {win}-sample analysis window"
        )
    if config.fft_size < win:
        raise ValueError(f"fft_size {config.fft_size} smaller than window of {win} samples")

    n_frames = (n - win) // hop + 1
    starts = np.arange(n_frames) * hop
    frames = audio.samples[starts[:, None] + np.arange(win)[None, :]]
    frames = frames * hann_window(win)[None, :]

    spectrum = np.abs(np.fft.rfft(frames, n=config.fft_size, axis=1)) ** 2
    fbank = mel_filterbank(config.num_mel_filters, config.fft_size, rate)
    energies = spectrum @ fbank.T
    log_energies = np.log(np.maximum(energies, config.log_floor))
    coeffs = dct(log_energies, type=2, norm="ortho", axis=1)[:, : config.num_coefficients]
    return FeatureMatrix(stimulus_id=stimulus_id, data=coeffs, frame_period=config.stride)


@dataclass
class FeatureArchive:
    """In-memory view of an archive: shared dims/frame_period plus per-id matrices."""

    dims: int
    frame_period: float
    _index: dict = field(default_factory=dict)  # id -> (frame_count, element_offset)
    _payload: np.ndarray | None = None  # flat float32 array, possibly memory-mapped
    path: str = ""

    def __contains__(self, stimulus_id: str) -> bool:
        return stimulus_id in self._index

    def __len__(self) -> int:
        return len(self._index)

    def stimulus_ids(self):
        return list(self._index.keys())

    def get_entry(self, stimulus_id: str) -> FeatureMatrix:
        try:
            frames, start = self._index[stimulus_id]
        except KeyError:
            raise UnknownStimulusError(
                f"stimulus id {stimulus_id!r} not present in archive {self.path or '<memory>'}"
            ) from None
        block = np.array(self._payload[start : start + frames * self.dims], dtype=np.float32)
        return FeatureMatrix(
            stimulus_id=stimulus_id,
            data=block.reshape(frames, self.dims),
            frame_period=self.frame_period,
        )


def get_entry(archive: FeatureArchive, stimulus_id: str) -> FeatureMatrix:
    return archive.get_entry(stimulus_id)


def write_archive(entries, path) -> None:
    """Serialize feature matrices; identical entries always yield identical bytes."""
    entries = list(entries)
    if not entries:
        raise ArchiveError("cannot write an archive with no entries")
    dims = entries[0].dims
    frame_period = entries[0].frame_period
    seen = set()
    for e in entries:
        if e.stimulus_id in seen:
            raise ArchiveError(f"duplicate stimulus id {e.stimulus_id!r}")
        seen.add(e.stimulus_id)
        if e.dims != dims:
            raise ArchiveError(
                f"inconsistent dims: {e.stimulus_id!r} has {e.dims}, expected {dims}"
            )
        if e.frame_period != frame_period:
            raise ArchiveError(
                f"inconsistent frame_period: {e.stimulus_id!r} has {e.frame_period}, "
                f"expected {frame_period}"
            )

    period_us = int(round(frame_period * 1e6))
    if not 0 < period_us < 2**32:
        raise ArchiveError(f"frame_period {frame_period}s not representable in microseconds")

    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dims, period_us, len(entries)))
        offset = 0
        for e in entries:
            id_bytes = e.stimulus_id.encode("utf-8")
            if len(id_bytes) >= 2**16:
                raise ArchiveError(f"stimulus id too long: {e.stimulus_id[:32]!r}...")
            f.write(_INDEX_HEAD.pack(len(id_bytes)))
            f.write(id_bytes)
            f.write(_INDEX_TAIL.pack(e.frames, offset))
            offset += e.frames * dims * 4
        for e in entries:
            f.write(np.ascontiguousarray(e.data, dtype="<f4").tobytes())


def read_archive(path) -> FeatureArchive:
    """Open an archive, validate its structure, and memory-map the payload.

    Lookups after this are O(1); the mapped payload is read-only and safe to
    share across threads.
    """
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise BadMagicError(f"{path}: too short to hold an archive header")
        magic, version, dims, period_us, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise BadMagicError(f"{path}: unsupported format version {version}")

        index = {}
        payload_elements = 0
        for _ in range(count):
            raw = f.read(_INDEX_HEAD.size)
            if len(raw) < _INDEX_HEAD.size:
                raise TruncatedArchiveError(f"{path}: index ends prematurely")
            (id_len,) = _INDEX_HEAD.unpack(raw)
            id_bytes = f.read(id_len)
            tail = f.read(_INDEX_TAIL.size)
            if len(id_bytes) < id_len or len(tail) < _INDEX_TAIL.size:
                raise TruncatedArchiveError(f"{path}: index ends prematurely")
            frames, byte_offset = _INDEX_TAIL.unpack(tail)
            try:
                stimulus_id = id_bytes.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ArchiveError(f"{path}: undecodable stimulus id in index") from exc
            if stimulus_id in index:
                raise ArchiveError(f"{path}: duplicate stimulus id {stimulus_id!r}")
            if frames < 1 or byte_offset % 4:
                raise ArchiveError(f"{path}: corrupt index record for {stimulus_id!r}")
            index[stimulus_id] = (frames, byte_offset // 4)
            payload_elements += frames * dims
        payload_start = f.tell()
        f.seek(0, 2)
        file_size = f.tell()

    expected = payload_start + payload_elements * 4
    if file_size < expected:
        raise TruncatedArchiveError(
            f"{path}: payload truncated ({file_size} bytes, need {expected})"
        )
    for stimulus_id, (frames, start) in index.items():
        if (start + frames * dims) * 4 > payload_elements * 4:
            raise ArchiveError(f"{path}: blob for {stimulus_id!r} exceeds payload")

    if payload_elements:
        payload = np.memmap(path, dtype="<f4", mode="r", offset=payload_start,
                            shape=(payload_elements,))
    else:
        payload = np.empty(0, dtype="<f4")
    return FeatureArchive(
        dims=dims,
        frame_period=period_us / 1e6,
        _index=index,
        _payload=payload,
        path=str(path),
    )

"""WAV loading for model inference: mono float32 at 16 kHz."""

import numpy as np
from scipy.io import wavfile

TARGET_RATE = 16000

_INT_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


class AudioDecodeError(Exception):
    pass


def load_wav_mono_16k(path) -> np.ndarray:
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise AudioDecodeError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise AudioDecodeError(f"{path}: zero-length audio")
    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in _INT_SCALE:
        samples = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioDecodeError(f"{path}: unsupported encoding {data.dtype}")
    if samples.ndim > 1:
        samples = samples.mean(axis=1)
    if rate != TARGET_RATE:
        n_out = int(round(samples.shape[0] * TARGET_RATE / rate))
        pos = np.minimum(np.arange(n_out) * (rate / TARGET_RATE),
                         samples.shape[0] - 1.0)
        idx = np.floor(pos).astype(np.int64)
        hi = np.minimum(idx + 1, samples.shape[0] - 1)
        frac = pos - idx
        samples = samples[idx] * (1.0 - frac) + samples[hi] * frac
    return samples.astype(np.float32)

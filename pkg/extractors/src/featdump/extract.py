"""Batch extraction: audio directory -> feature archive."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .archive import write_archive
from .audio import AudioDecodeError, load_wav_mono_16k
from .models import ExtractorSpec, build_adapter


@dataclass
class ExtractionResult:
    extracted: list = field(default_factory=list)   # stimulus ids written
    skipped: list = field(default_factory=list)     # (filename, reason)
    dims: int = 0
    frame_period: float = 0.0


def extract(spec: ExtractorSpec, audio_dir, out_archive) -> ExtractionResult:
    """Run the selected layer over every WAV in audio_dir, writing one archive
    entry per decodable file. Undecodable or empty files are skipped and
    reported in the result."""
    adapter = build_adapter(spec)
    wavs = sorted(Path(audio_dir).glob("*.wav"))
    if not wavs:
        raise FileNotFoundError(f"no .wav files in {audio_dir}")

    result = ExtractionResult(frame_period=adapter.frame_period)
    entries = []
    for wav in wavs:
        try:
            wave = load_wav_mono_16k(wav)
        except AudioDecodeError as exc:
            result.skipped.append((wav.name, str(exc)))
            continue
        features = adapter.forward(wave)
        expected = adapter.expected_frames(wave.shape[0])
        if features.shape[0] != expected:
            raise RuntimeError(
                f"{wav.name}: model produced {features.shape[0]} frames, "
                f"stride arithmetic predicts {expected}"
            )
        if entries and features.shape[1] != result.dims:
            raise RuntimeError(
                f"{wav.name}: dims {features.shape[1]} != {result.dims}"
            )
        result.dims = features.shape[1]
        entries.append((wav.stem, features))
        result.extracted.append(wav.stem)

    if not entries:
        raise RuntimeError("every input file was skipped; nothing to write")
    write_archive(entries, adapter.frame_period, out_archive)
    return result

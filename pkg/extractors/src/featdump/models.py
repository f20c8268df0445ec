"""Model-family adapters: load a checkpoint, pick a layer, map audio to frames.

Families and their layer selectors:

- ``wav2vec2`` / ``hubert``: transformers checkpoint directory or hub id;
  layer k selects ``hidden_states[k]`` (0 = projected pre-transformer
  features, k >= 1 = output of the k-th transformer block).
- ``cpc``: torch .pt checkpoint of the bundled conv-encoder + LSTM model;
  layer 0 = encoder output, layer 1 = sequence-model output.
- ``asr-phone``: torch .pt checkpoint of the bundled spectrogram-conv-GRU
  phone recognizer; layer k (1-based) = output of the k-th RNN layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

FAMILIES = ("cpc", "wav2vec2", "hubert", "asr-phone")

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class ExtractorSpec:
    model_family: str
    checkpoint: str
    layer: int
    expected_frame_period: float | None = None

    def __post_init__(self):
        if self.model_family not in FAMILIES:
            raise ValueError(
                f"unknown model family {self.model_family!r}; expected one of {FAMILIES}"
            )
        if self.layer < 0:
            raise ValueError("layer selector must be nonnegative")


def conv_out(length: int, kernel: int, stride: int, padding: int = 0) -> int:
    return (length + 2 * padding - kernel) // stride + 1


class TransformerAdapter:
    """wav2vec2 and HuBERT share conv-frontend geometry and hidden_states layout."""

    def __init__(self, model, conv_kernel, conv_stride, layer: int, family: str):
        n_layers = model.config.num_hidden_layers
        if layer > n_layers:
            raise ValueError(
                f"{family}: layer {layer} out of range (0..{n_layers}; "
                f"0 is the pre-transformer projection)"
            )
        self.model = model.eval()
        self.conv_geometry = list(zip(conv_kernel, conv_stride))
        self.layer = layer
        self.family = family
        self.frame_period = math.prod(conv_stride) / SAMPLE_RATE

    def expected_frames(self, n_samples: int) -> int:
        length = n_samples
        for kernel, stride in self.conv_geometry:
            length = conv_out(length, kernel, stride)
        return length

    def forward(self, wave: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            out = self.model(torch.from_numpy(wave)[None, :],
                             output_hidden_states=True)
        return out.hidden_states[self.layer][0].cpu().numpy()


class CpcModel(nn.Module):
    """Five-conv encoder (160x downsampling) plus an LSTM sequence model."""

    KERNELS = (10, 8, 4, 4, 4)
    STRIDES = (5, 4, 2, 2, 2)

    def __init__(self, hidden_dim: int = 64, context_dim: int = 64):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.context_dim = context_dim
        convs = []
        channels = 1
        for kernel, stride in zip(self.KERNELS, self.STRIDES):
            convs.append(nn.Conv1d(channels, hidden_dim, kernel, stride))
            channels = hidden_dim
        self.convs = nn.ModuleList(convs)
        self.lstm = nn.LSTM(hidden_dim, context_dim, batch_first=True)

    def forward(self, wave):  # (batch, samples)
        z = wave[:, None, :]
        for conv in self.convs:
            z = torch.relu(conv(z))
        z = z.transpose(1, 2)  # (batch, frames, hidden)
        context, _ = self.lstm(z)
        return z, context


class CpcAdapter:
    frame_period = math.prod(CpcModel.STRIDES) / SAMPLE_RATE

    def __init__(self, model: CpcModel, layer: int):
        if layer not in (0, 1):
            raise ValueError("cpc: layer must be 0 (encoder) or 1 (sequence model)")
        self.model = model.eval()
        self.layer = layer

    def expected_frames(self, n_samples: int) -> int:
        length = n_samples
        for kernel, stride in zip(CpcModel.KERNELS, CpcModel.STRIDES):
            length = conv_out(length, kernel, stride)
        return length

    def forward(self, wave: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            encoded, context = self.model(torch.from_numpy(wave)[None, :])
        chosen = encoded if self.layer == 0 else context
        return chosen[0].cpu().numpy()


class PhoneRecognizerModel(nn.Module):
    """Spectrogram frontend, two 2-D convs, and a stack of GRU layers."""

    N_FFT = 320
    HOP = 160

    def __init__(self, hidden_dim: int = 64, num_rnn_layers: int = 4):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.num_rnn_layers = num_rnn_layers
        self.conv1 = nn.Conv2d(1, 8, kernel_size=(41, 11), stride=(2, 2),
                               padding=(20, 5))
        self.conv2 = nn.Conv2d(8, 8, kernel_size=(21, 11), stride=(2, 1),
                               padding=(10, 5))
        freq_bins = self.N_FFT // 2 + 1
        f1 = conv_out(freq_bins, 41, 2, 20)
        f2 = conv_out(f1, 21, 2, 10)
        rnns = []
        input_size = 8 * f2
        for _ in range(num_rnn_layers):
            rnns.append(nn.GRU(input_size, hidden_dim, batch_first=True))
            input_size = hidden_dim
        self.rnns = nn.ModuleList(rnns)
        self.register_buffer("window", torch.hann_window(self.N_FFT, periodic=True))

    def forward(self, wave):  # (batch, samples) -> list of per-layer outputs
        spec = torch.stft(wave, self.N_FFT, hop_length=self.HOP,
                          win_length=self.N_FFT, window=self.window,
                          center=False, return_complex=True)
        power = spec.abs() ** 2  # (batch, freq, frames)
        x = torch.log(power + 1e-10)[:, None, :, :]
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))  # (batch, ch, freq', frames')
        batch, ch, freq, frames = x.shape
        seq = x.permute(0, 3, 1, 2).reshape(batch, frames, ch * freq)
        outputs = []
        h = seq
        for rnn in self.rnns:
            h, _ = rnn(h)
            outputs.append(h)
        return outputs


class PhoneRecognizerAdapter:
    frame_period = PhoneRecognizerModel.HOP * 2 / SAMPLE_RATE

    def __init__(self, model: PhoneRecognizerModel, layer: int):
        if not 1 <= layer <= model.num_rnn_layers:
            raise ValueError(
                f"asr-phone: layer must be in 1..{model.num_rnn_layers} (1-based)"
            )
        self.model = model.eval()
        self.layer = layer

    def expected_frames(self, n_samples: int) -> int:
        t = conv_out(n_samples, PhoneRecognizerModel.N_FFT, PhoneRecognizerModel.HOP)
        t = conv_out(t, 11, 2, 5)   # conv1 time axis
        t = conv_out(t, 11, 1, 5)   # conv2 time axis
        return t

    def forward(self, wave: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            outputs = self.model(torch.from_numpy(wave)[None, :])
        return outputs[self.layer - 1][0].cpu().numpy()


def save_torch_checkpoint(model, path) -> None:
    """Self-describing .pt checkpoint for the bundled cpc/asr-phone models."""
    if isinstance(model, CpcModel):
        payload = {
            "family": "cpc",
            "config": {"hidden_dim": model.hidden_dim,
                       "context_dim": model.context_dim},
            "state_dict": model.state_dict(),
        }
    elif isinstance(model, PhoneRecognizerModel):
        payload = {
            "family": "asr-phone",
            "config": {"hidden_dim": model.hidden_dim,
                       "num_rnn_layers": model.num_rnn_layers},
            "state_dict": model.state_dict(),
        }
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    torch.save(payload, path)


def _load_torch_checkpoint(path, family: str):
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("family") != family:
        raise ValueError(
            f"checkpoint at {path} holds family {payload.get('family')!r}, "
            f"not {family!r}"
        )
    if family == "cpc":
        model = CpcModel(**payload["config"])
    else:
        model = PhoneRecognizerModel(**payload["config"])
    model.load_state_dict(payload["state_dict"], strict=True)
    return model


def build_adapter(spec: ExtractorSpec):
    if spec.model_family in ("wav2vec2", "hubert"):
        if spec.model_family == "wav2vec2":
            from transformers import Wav2Vec2Model as ModelClass
        else:
            from transformers import HubertModel as ModelClass
        model = ModelClass.from_pretrained(spec.checkpoint)
        adapter = TransformerAdapter(model, model.config.conv_kernel,
                                     model.config.conv_stride, spec.layer,
                                     spec.model_family)
    elif spec.model_family == "cpc":
        adapter = CpcAdapter(_load_torch_checkpoint(spec.checkpoint, "cpc"),
                             spec.layer)
    else:
        adapter = PhoneRecognizerAdapter(
            _load_torch_checkpoint(spec.checkpoint, "asr-phone"), spec.layer)

    if spec.expected_frame_period is not None and \
            abs(spec.expected_frame_period - adapter.frame_period) > 1e-9:
        raise ValueError(
            f"{spec.model_family} produces frames every {adapter.frame_period}s, "
            f"not the expected {spec.expected_frame_period}s"
        )
    return adapter

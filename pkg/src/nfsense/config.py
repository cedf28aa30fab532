"""Run configuration: a flat key=value file mirroring the module configs.

Unknown keys are rejected by name.  CLI flags override file values; the
merged dictionary feeds the per-module config constructors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .geometry import RadioConfig
from .sra import SraConfig
from .tcn import TcnConfig, TrainConfig
from .traffic import TrafficModel

# Every accepted key with its type and default.
_SCHEMA: dict[str, tuple[type, Any]] = {
    "radio.lambda_m": (float, 0.06),
    "radio.alpha": (float, 4.0),
    "radio.eta": (float, 1.0),
    "radio.b": (float, 1.0),
    "radio.g_tilde": (float, 1.0),
    "capacity.beta": (float, 50.0),
    "capacity.delta_r": (float, 0.1),
    "capacity.k": (int, 2),
    "traffic.kind": (str, "dl_csi"),
    "traffic.mean_burst_s": (float, 0.3),
    "traffic.mean_gap_s": (float, 0.3),
    "traffic.rate_in_burst_hz": (float, 1000.0),
    "traffic.contention_users": (int, 1),
    "sra.dt": (float, 0.1),
    "sra.n_nsp": (int, 2),
    "sra.f_rs": (float, 64.0),
    "sra.f_cut": (float, 1.0),
    "sra.n_f": (int, 32),
    "sra.fft_len": (int, 256),
    "sra.hop": (int, 16),
    "sra.min_label_slice_s": (float, 4.0),
    "mask.fraction": (float, 0.3),
    "mask.mean_run_frames": (float, 8.0),
    "dataset.masks_per_label": (int, 3),
    "dataset.split_fraction": (float, 0.7),
    "dataset.max_label_frames": (int, 128),
    "dataset.label_stride": (int, 96),
    "tcn.n_c": (int, 64),
    "tcn.kernel_len": (int, 5),
    "tcn.n_blocks": (int, 4),
    "tcn.dilations": (str, "1,2,4,8"),
    "tcn.bottleneck_dim": (int, 16),
    "train.lr": (float, 1e-3),
    "train.beta1": (float, 0.9),
    "train.beta2": (float, 0.999),
    "train.eps": (float, 1e-8),
    "train.batch_size": (int, 16),
    "train.epochs": (int, 30),
    "train.grad_clip": (float, 5.0),
    "train.masked_loss_only": (int, 0),
}


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        merged = {k: default for k, (_, default) in _SCHEMA.items()}
        for key, value in self.values.items():
            if key not in _SCHEMA:
                raise ValueError(f"unknown config key {key!r}")
            merged[key] = _SCHEMA[key][0](value)
        self.values = merged

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def set(self, key: str, value: Any) -> None:
        if key not in _SCHEMA:
            raise ValueError(f"unknown config key {key!r}")
        self.values[key] = _SCHEMA[key][0](value)

    def radio(self) -> RadioConfig:
        return RadioConfig(lambda_m=self["radio.lambda_m"], alpha=self["radio.alpha"],
                           eta=self["radio.eta"], b=self["radio.b"],
                           g_tilde=self["radio.g_tilde"])

    def sra(self) -> SraConfig:
        return SraConfig(dt=self["sra.dt"], n_nsp=self["sra.n_nsp"], f_rs=self["sra.f_rs"],
                         f_cut=self["sra.f_cut"], n_f=self["sra.n_f"],
                         fft_len=self["sra.fft_len"], hop=self["sra.hop"],
                         min_label_slice_s=self["sra.min_label_slice_s"])

    def tcn(self, seed: int = 0) -> TcnConfig:
        dil = tuple(int(d) for d in str(self["tcn.dilations"]).split(","))
        return TcnConfig(n_f=self["sra.n_f"], n_c=self["tcn.n_c"],
                         kernel_len=self["tcn.kernel_len"], n_blocks=self["tcn.n_blocks"],
                         dilations=dil, bottleneck_dim=self["tcn.bottleneck_dim"],
                         seed=seed)

    def train(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(lr=self["train.lr"], beta1=self["train.beta1"],
                           beta2=self["train.beta2"], eps=self["train.eps"],
                           batch_size=self["train.batch_size"], epochs=self["train.epochs"],
                           grad_clip=self["train.grad_clip"], seed=seed,
                           masked_loss_only=bool(self["train.masked_loss_only"]))

    def traffic(self, seed: int = 0) -> TrafficModel:
        return TrafficModel(kind=self["traffic.kind"],
                            mean_burst_s=self["traffic.mean_burst_s"],
                            mean_gap_s=self["traffic.mean_gap_s"],
                            rate_in_burst_hz=self["traffic.rate_in_burst_hz"],
                            contention_users=self["traffic.contention_users"],
                            seed=seed)


def load_config(path) -> RunConfig:
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed line {line!r} (expected key=value)")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return RunConfig(values)

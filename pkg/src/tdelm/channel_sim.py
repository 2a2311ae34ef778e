"""Synthetic multi-antenna OFDM channels and pilot-window datasets.

The generator models a half-wavelength uniform linear array at the
transmitter and a single-antenna receiver at R locations. Each location sees
P propagation paths with gain ``a``, departure angle ``theta`` and delay
``tau``::

    H[j, k, f] = sum_p a[k, p] * exp(-1j*pi*j*sin(theta[k, p]))
                               * exp(-2j*pi*f*df*tau[k, p])

with 0-based tx element j and subcarrier f, and ``df`` the subcarrier
spacing. Subcarriers are numbered from 1 in the dataset API: odd ones carry
pilots and even ones are interpolation targets.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .io import load_tensor, read_json, save_tensor, write_json
from .tensor_core import Tensor

PLANES = ("real", "imag")


class ChannelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    n_tx: int = 16
    n_rx: int = 3
    n_freq: int = 256
    n_paths: int = 5
    delay_spread: float = 50e-9
    angle_spread: float = 10.0
    gain_decay: float = 0.5
    bandwidth: float = 200e6
    center_freq: float = 4e9
    snr_db: float | None = None

    def validate(self) -> "ChannelConfig":
        for name in ("n_tx", "n_rx", "n_freq", "n_paths"):
            if int(getattr(self, name)) < 1:
                raise ChannelConfigError(f"{name} must be >= 1")
        if self.delay_spread < 0 or self.angle_spread < 0 or self.gain_decay < 0:
            raise ChannelConfigError("spreads and gain decay must be non-negative")
        if self.bandwidth <= 0:
            raise ChannelConfigError("bandwidth must be positive")
        return self

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / max(self.n_freq - 1, 1)

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ChannelConfigError(f"unknown channel config keys: {sorted(unknown)}")
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ChannelGrid:
    """Complex responses indexed (tx element, rx location, subcarrier)."""

    responses: np.ndarray
    config: ChannelConfig
    seed: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.responses.shape

    def plane(self, name: str) -> np.ndarray:
        if name == "real":
            return self.responses.real
        if name == "imag":
            return self.responses.imag
        raise ValueError(f"unknown plane {name!r}")


def channel_parameters(cfg: ChannelConfig, seed: int) -> dict:
    """Draw per-location path gains, angles (rad) and delays (s)."""
    rng = np.random.default_rng(seed)
    R, P = cfg.n_rx, cfg.n_paths
    mean_angle = rng.uniform(-np.pi / 3, np.pi / 3, size=(R, 1))
    spread = np.deg2rad(cfg.angle_spread)
    angles = mean_angle + rng.uniform(-spread, spread, size=(R, P))
    delays = np.sort(rng.exponential(cfg.delay_spread, size=(R, P)), axis=1)
    power = np.exp(-cfg.gain_decay * np.arange(P))
    power /= power.sum()
    gains = np.sqrt(power / 2) * (rng.standard_normal((R, P)) + 1j * rng.standard_normal((R, P)))
    return {"gains": gains, "angles": angles, "delays": delays, "rng": rng}


def generate_channel(cfg: ChannelConfig | None = None, seed: int = 0) -> ChannelGrid:
    """Deterministic multipath ULA channel for ``(cfg, seed)``."""
    cfg = (cfg or ChannelConfig()).validate()
    params = channel_parameters(cfg, seed)
    j = np.arange(cfg.n_tx)[:, None, None]
    f = np.arange(cfg.n_freq)[None, :, None]
    H = np.empty((cfg.n_tx, cfg.n_rx, cfg.n_freq), dtype=np.complex128)
    df = cfg.subcarrier_spacing
    for k in range(cfg.n_rx):
        steer = np.exp(-1j * np.pi * j[:, 0] * np.sin(params["angles"][k]))        # (J, P)
        delay = np.exp(-2j * np.pi * f[0] * df * params["delays"][k])               # (F, P)
        H[:, k, :] = (steer * params["gains"][k]) @ delay.T
    if cfg.snr_db is not None:
        rng = params["rng"]
        noise_power = np.mean(np.abs(H) ** 2) / 10 ** (cfg.snr_db / 10)
        H = H + np.sqrt(noise_power / 2) * (
            rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)
        )
    return ChannelGrid(H, cfg, seed)


def adjacent_correlation(grid: ChannelGrid) -> float:
    """Correlation coefficient magnitude between neighbouring subcarriers."""
    H = grid.responses
    a = H[..., :-1].ravel() - H[..., :-1].mean()
    b = H[..., 1:].ravel() - H[..., 1:].mean()
    return float(abs(np.vdot(a, b)) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real))


@dataclass(frozen=True)
class NormStats:
    real_mean: float
    real_std: float
    imag_mean: float
    imag_std: float

    def denormalize(self, values, plane: str):
        mean, std = (self.real_mean, self.real_std) if plane == "real" else (
            self.imag_mean, self.imag_std)
        return np.asarray(values) * std + mean


def normalize(grid: ChannelGrid) -> tuple[ChannelGrid, NormStats]:
    """Shift and scale the real and imaginary planes to zero mean, unit std."""
    re, im = grid.responses.real, grid.responses.imag
    stats = NormStats(float(re.mean()), float(re.std()), float(im.mean()), float(im.std()))
    if stats.real_std == 0.0 or stats.imag_std == 0.0:
        raise ChannelConfigError("cannot normalize a plane with zero variance")
    out = (re - stats.real_mean) / stats.real_std + 1j * (im - stats.imag_mean) / stats.imag_std
    return replace(grid, responses=out), stats


def window_offsets(W: int, mode: str = "pilot") -> np.ndarray:
    """Subcarrier offsets around a target, ascending.

    ``pilot``: the W nearest odd offsets, W/2 on each side (W=4 -> -3,-1,1,3).
    ``consecutive``: the W nearest neighbours, target excluded (W=4 -> -2,-1,1,2).
    """
    if W <= 0 or W % 2:
        raise ChannelConfigError(f"window length must be even and positive, got {W}")
    half = np.arange(1, W // 2 + 1)
    if mode == "pilot":
        pos = 2 * half - 1
    elif mode == "consecutive":
        pos = half
    else:
        raise ChannelConfigError(f"unknown window mode {mode!r}")
    return np.concatenate([-pos[::-1], pos])


@dataclass(frozen=True)
class WindowDataset:
    """Pilot windows of one plane.

    ``features[n]`` has shape (J, R, W): the plane values of every
    (tx, rx) pair at the window offsets around target ``targets[n]``.
    ``labels[n, j + J*k]`` is the plane value of pair (j, k) at the target.
    """

    features: np.ndarray
    labels: np.ndarray
    plane: str
    targets: np.ndarray
    offsets: np.ndarray

    def __len__(self):
        return self.features.shape[0]

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.features.shape[1:]

    def samples(self) -> list[Tensor]:
        return [Tensor(x) for x in self.features]

    def subset(self, idx) -> "WindowDataset":
        idx = np.asarray(idx, dtype=int)
        return replace(self, features=self.features[idx], labels=self.labels[idx],
                       targets=self.targets[idx])

    def subchannel_labels(self, j: int, k: int) -> np.ndarray:
        return self.labels[:, j + self.features.shape[1] * k]


def valid_targets(n_freq: int, offsets) -> np.ndarray:
    """Even 1-based subcarriers whose whole window lies in 1..n_freq."""
    offsets = np.asarray(offsets)
    targets = np.arange(2, n_freq + 1, 2)
    ok = (targets + offsets.min() >= 1) & (targets + offsets.max() <= n_freq)
    return targets[ok]


def build_interpolation_dataset(grid: ChannelGrid, W: int, mode: str = "pilot"):
    """Real-plane and imaginary-plane window datasets for every full window."""
    offsets = window_offsets(W, mode)
    J, R, F = grid.shape
    targets = valid_targets(F, offsets)
    if targets.size == 0:
        raise ChannelConfigError(f"{F} subcarriers are too few for a window of {W}")
    cols = targets[:, None] + offsets[None, :] - 1          # 0-based (N, W)
    out = []
    for plane in PLANES:
        values = grid.plane(plane)
        feats = np.moveaxis(values[:, :, cols], 2, 0)          # (N, J, R, W)
        labels = values[:, :, targets - 1].reshape(J * R, -1, order="F").T
        out.append(WindowDataset(np.ascontiguousarray(feats), np.ascontiguousarray(labels),
                                 plane, targets.copy(), offsets.copy()))
    return tuple(out)


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError("need at least two samples to split")
    perm = np.random.default_rng(seed).permutation(n)
    half = (n + 1) // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def split_even(ds: WindowDataset, seed: int) -> tuple[WindowDataset, WindowDataset]:
    """Seeded split into halves of sizes ceil(N/2) and floor(N/2)."""
    train, test = split_indices(len(ds), seed)
    return ds.subset(train), ds.subset(test)


def save_dataset(ds: WindowDataset, directory, name: str) -> dict:
    """Write features and labels as tensor files; returns the manifest entry."""
    directory = Path(directory)
    save_tensor(directory / f"{name}_features", ds.features)
    save_tensor(directory / f"{name}_labels", ds.labels)
    return {
        "features": f"{name}_features",
        "labels": f"{name}_labels",
        "plane": ds.plane,
        "targets": [int(t) for t in ds.targets],
        "offsets": [int(o) for o in ds.offsets],
    }


def load_dataset(directory, entry: dict) -> WindowDataset:
    directory = Path(directory)
    return WindowDataset(
        np.ascontiguousarray(load_tensor(directory / entry["features"])),
        np.ascontiguousarray(load_tensor(directory / entry["labels"])),
        entry["plane"],
        np.asarray(entry["targets"], dtype=int),
        np.asarray(entry["offsets"], dtype=int),
    )


def write_manifest(directory, splits: dict, stats: NormStats, extra: dict | None = None) -> Path:
    """``splits`` maps split name -> plane -> WindowDataset."""
    entries = {
        split: {plane: save_dataset(ds, directory, f"{split}_{plane}") for plane, ds in planes.items()}
        for split, planes in splits.items()
    }
    return write_json(Path(directory) / "dataset.json",
                      {"splits": entries, "norm_stats": asdict(stats), **(extra or {})})


def read_manifest(directory) -> tuple[dict, NormStats, dict]:
    m = read_json(Path(directory) / "dataset.json")
    splits = {
        split: {plane: load_dataset(directory, e) for plane, e in planes.items()}
        for split, planes in m.pop("splits").items()
    }
    return splits, NormStats(**m.pop("norm_stats")), m

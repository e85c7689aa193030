"""IRS phase schedules and pilot observations ``Y_m = G_m x_2 V^T + N_m``.

Pilot symbols are fixed to one, so they never appear in the data path.

SNR convention: the ratio of the average per-entry power of the noiseless
received tensors (averaged over subcarriers) to the noise variance.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .channel_model import ChannelRealization
from .tensor_core import mode_product

SCHEDULE_KINDS = ("orthogonal-dft", "random-phase")


@dataclass(frozen=True)
class PhaseSchedule:
    V: np.ndarray = field(repr=False)
    kind: str

    @property
    def nr(self) -> int:
        return self.V.shape[0]

    @property
    def pilots(self) -> int:
        return self.V.shape[1]

    def gram(self) -> np.ndarray:
        """``V^* V^T``."""
        return self.V.conj() @ self.V.T


@dataclass(frozen=True)
class ObservationSet:
    tensors: Tuple[np.ndarray, ...] = field(repr=False)
    schedule: PhaseSchedule
    noise_power: float
    snr_db: float = float("nan")


def build_phase_schedule(nr: int, pilots: int, kind: str = "orthogonal-dft", rng=None) -> PhaseSchedule:
    """Unit-modulus ``N_r x P`` reflection schedule.

    ``orthogonal-dft`` takes the first ``N_r`` rows of the P-point DFT matrix,
    so ``V^* V^T = P I``; it needs ``P >= N_r``.  ``random-phase`` draws i.i.d.
    phases on [0, 2 pi).
    """
    if nr < 1 or pilots < 1:
        raise ValueError("N_r and P must be positive")
    if kind == "orthogonal-dft":
        if pilots < nr:
            raise ValueError(f"orthogonal schedule needs P >= N_r (P={pilots}, N_r={nr})")
        V = np.exp(-2j * np.pi * np.outer(np.arange(nr), np.arange(pilots)) / pilots)
    elif kind == "random-phase":
        rng = np.random.default_rng(rng)
        V = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(nr, pilots)))
    else:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    return PhaseSchedule(V, kind)


def noiseless(channel: np.ndarray, schedule: PhaseSchedule) -> np.ndarray:
    return mode_product(channel, schedule.V.T, 2)


def snr_to_noise_power(ch: ChannelRealization, schedule: PhaseSchedule, snr_db: float) -> float:
    power = np.mean([np.mean(np.abs(noiseless(g, schedule)) ** 2) for g in ch.tensors])
    if power <= 0:
        raise ValueError("received signal is identically zero; SNR undefined")
    return float(power / 10 ** (snr_db / 10))


def observe(ch: ChannelRealization, schedule: PhaseSchedule, noise_power: float, rng=None, snr_db=float("nan")) -> ObservationSet:
    """Simulate the received tensors of every subcarrier.

    Noise entries are circular complex Gaussian with variance ``noise_power``.
    """
    if noise_power < 0:
        raise ValueError("noise power must be non-negative")
    if ch.config.nr != schedule.nr:
        raise ValueError(f"schedule has {schedule.nr} rows but the IRS has {ch.config.nr} elements")
    rng = np.random.default_rng(rng)
    scale = np.sqrt(noise_power / 2)
    out = []
    for g in ch.tensors:
        y = noiseless(g, schedule)
        if noise_power > 0:
            y = y + scale * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
        out.append(y)
    return ObservationSet(tuple(out), schedule, float(noise_power), float(snr_db))


def observe_snr(ch: ChannelRealization, schedule: PhaseSchedule, snr_db: float, rng=None) -> ObservationSet:
    return observe(ch, schedule, snr_to_noise_power(ch, schedule, snr_db), rng, snr_db)


def save_observations(obs: ObservationSet, path) -> None:
    """Store as ``.npz`` with arrays ``Y`` (M x N_z x P x N_y), ``V`` and scalars."""
    np.savez(
        path,
        Y=np.stack(obs.tensors),
        V=obs.schedule.V,
        kind=np.array(obs.schedule.kind),
        noise_power=np.array(obs.noise_power),
        snr_db=np.array(obs.snr_db),
    )


def load_observations(path) -> ObservationSet:
    with np.load(path) as z:
        schedule = PhaseSchedule(z["V"], str(z["kind"]))
        return ObservationSet(tuple(z["Y"]), schedule, float(z["noise_power"]), float(z["snr_db"]))

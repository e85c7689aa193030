"""Near-field XL-IRS cascaded channel construction.

Index conventions
-----------------
* Subcarriers are numbered ``m = 1..M`` with ``f_m = f_c + (2m - M) B / (2M)``.
* IRS element ``(n_y, n_z)`` (both 1-based) sits at position
  ``(n_y - 1) + (n_z - 1) * Nr_y`` of a length-``N_r`` response vector,
  i.e. ``n_y`` runs fastest.
* The BS UPA response is ``kron(a_Ny, a_Nz)`` so the BS antenna index is
  ``(n_z - 1) + (n_y - 1) * N_z``.
* The cascaded channel tensor has dims ``(N_z, N_r, N_y)``; its mode-2 fibres
  are rows of the matrix ``G_m = H_g diag(h_u)``.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# Default geometry (metres)
DEFAULT_UE_DISTANCE_RANGE = (5.0, 10.0)
DEFAULT_BS_DISTANCE = 7.2153


@dataclass(frozen=True)
class SystemConfig:
    """Array geometry and OFDM training plan.

    ``spacing=None`` means half a wavelength at the carrier frequency.
    """

    nz: int = 5
    ny: int = 5
    nrz: int = 64
    nry: int = 4
    fc: float = 28e9
    bandwidth: float = 2e9
    subcarriers: int = 6
    pilots: int = 280
    spacing: Optional[float] = None
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("nz", "ny", "nrz", "nry", "subcarriers", "pilots"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.fc > self.bandwidth / 2:
            raise ValueError("carrier frequency must exceed half the bandwidth")
        if self.c <= 0:
            raise ValueError("speed of light must be positive")
        if self.spacing is not None and self.spacing <= 0:
            raise ValueError("element spacing must be positive")

    @property
    def nb(self) -> int:
        return self.nz * self.ny

    @property
    def nr(self) -> int:
        return self.nrz * self.nry

    @property
    def wavelength(self) -> float:
        return self.c / self.fc

    @property
    def d(self) -> float:
        return self.wavelength / 2 if self.spacing is None else self.spacing

    def frequency(self, m: int) -> float:
        """Frequency of subcarrier ``m`` (1-based)."""
        if not 1 <= m <= self.subcarriers:
            raise ValueError(f"subcarrier index {m} outside 1..{self.subcarriers}")
        M = self.subcarriers
        return self.fc + (2 * m - M) / (2 * M) * self.bandwidth

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([self.frequency(m) for m in range(1, self.subcarriers + 1)])

    @property
    def channel_dims(self) -> Tuple[int, int, int]:
        return (self.nz, self.nr, self.ny)

    @property
    def observation_dims(self) -> Tuple[int, int, int]:
        return (self.nz, self.pilots, self.ny)


@dataclass(frozen=True)
class BsIrsLink:
    """LOS IRS-BS link. Angles in radians, distance in metres."""

    gain: complex
    bs_elevation: float
    bs_azimuth: float
    irs_elevation: float
    irs_azimuth: float
    distance: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("BS-IRS distance must be positive")

    @property
    def delay(self) -> float:
        return self.distance / SPEED_OF_LIGHT


@dataclass(frozen=True)
class UePath:
    gain: complex
    delay: float
    elevation: float
    azimuth: float
    distance: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("UE-IRS distance must be positive")
        if self.delay < 0:
            raise ValueError("path delay must be non-negative")


@dataclass(frozen=True)
class ChannelRealization:
    config: SystemConfig
    link: BsIrsLink
    paths: Tuple[UePath, ...]
    tensors: Tuple[np.ndarray, ...] = field(default=(), repr=False, compare=False)

    @property
    def cascaded_gains(self) -> np.ndarray:
        return np.array([p.gain * self.link.gain for p in self.paths])

    @property
    def cascaded_delays(self) -> np.ndarray:
        return np.array([self.link.delay + p.delay for p in self.paths])

    def gain_delay_terms(self, m: int) -> np.ndarray:
        """``kappa_{l,m} = beta_l exp(-j 2 pi f_m tau_l)`` for every path."""
        f = self.config.frequency(m)
        return self.cascaded_gains * np.exp(-2j * np.pi * f * self.cascaded_delays)


def nf_delta_distance(cfg: SystemConfig, n_y, n_z, elevation, azimuth, distance):
    """Path-length difference between IRS element ``(n_y, n_z)`` and the reference.

    Uses the expanded form
    ``sqrt(u^2 + (n_y-1)^2 d^2 + (n_z-1)^2 d^2 - 2(n_y-1) d u sin(t) sin(p)
    - 2(n_z-1) d u cos(t)) - u``.  Broadcasts over array arguments.
    """
    u = np.asarray(distance, dtype=float)
    if np.any(u <= 0):
        raise ValueError("distance must be positive")
    n_y = np.asarray(n_y)
    n_z = np.asarray(n_z)
    if np.any(n_y < 1) or np.any(n_y > cfg.nry) or np.any(n_z < 1) or np.any(n_z > cfg.nrz):
        raise ValueError("IRS element index out of range")
    d = cfg.d
    dy = (n_y - 1) * d
    dz = (n_z - 1) * d
    inner = (
        u**2
        + dy**2
        + dz**2
        - 2 * dy * u * np.sin(elevation) * np.sin(azimuth)
        - 2 * dz * u * np.cos(elevation)
    )
    # Subtracting u directly cancels catastrophically for u >> d; this
    # rewrite is algebraically identical.
    return (inner - u**2) / (np.sqrt(inner) + u)


def _irs_grid(cfg: SystemConfig):
    n_y, n_z = np.meshgrid(np.arange(1, cfg.nry + 1), np.arange(1, cfg.nrz + 1))
    # row-major ravel of (n_z, n_y) grid makes n_y the fastest index
    return n_y.ravel(), n_z.ravel()


def nf_response(cfg: SystemConfig, elevation, azimuth, distance, m: int) -> np.ndarray:
    """Spherical-wavefront IRS response for subcarrier ``m``, length ``N_r``."""
    n_y, n_z = _irs_grid(cfg)
    du = nf_delta_distance(cfg, n_y, n_z, elevation, azimuth, distance)
    return np.exp(-2j * np.pi * cfg.frequency(m) / cfg.c * du)


def ff_row_response(cfg: SystemConfig, elevation, azimuth, m: int) -> np.ndarray:
    """BS row response ``a_{N_y,m}``."""
    k = np.arange(cfg.ny)
    phase = cfg.frequency(m) / cfg.c * cfg.d * np.sin(elevation) * np.sin(azimuth)
    return np.exp(-2j * np.pi * k * phase)


def ff_col_response(cfg: SystemConfig, elevation, m: int) -> np.ndarray:
    """BS column response ``a_{N_z,m}``."""
    k = np.arange(cfg.nz)
    phase = cfg.frequency(m) / cfg.c * cfg.d * np.cos(elevation)
    return np.exp(-2j * np.pi * k * phase)


def bs_response(cfg: SystemConfig, elevation, azimuth, m: int) -> np.ndarray:
    return np.kron(ff_row_response(cfg, elevation, azimuth, m), ff_col_response(cfg, elevation, m))


def incident_reflect_response(cfg: SystemConfig, path: UePath, link: BsIrsLink, m: int) -> np.ndarray:
    """``b_m(p, q) = conj(a_r(p)) * a_r(q)`` (elementwise)."""
    a_in = nf_response(cfg, path.elevation, path.azimuth, path.distance, m)
    a_out = nf_response(cfg, link.irs_elevation, link.irs_azimuth, link.distance, m)
    return a_in.conj() * a_out


def cascaded_channel_tensor(cfg: SystemConfig, ch: ChannelRealization, m: int) -> np.ndarray:
    """Cascaded channel tensor of subcarrier ``m``, dims ``(N_z, N_r, N_y)``.

    Sum over paths of ``kappa_l * a_Nz o conj(b_l) o a_Ny``.  The IRS factor is
    conjugated so that the mode-2 fibres reproduce the rows of
    ``H_g diag(h_u)``; this is what makes ``G x_2 V^T`` equal ``G_m V``.
    """
    if not ch.paths:
        raise ValueError("channel realisation has no UE paths")
    link = ch.link
    a_z = ff_col_response(cfg, link.bs_elevation, m)
    a_y = ff_row_response(cfg, link.bs_elevation, link.bs_azimuth, m)
    kappa = ch.gain_delay_terms(m)
    irs = np.zeros(cfg.nr, dtype=complex)
    for k, p in zip(kappa, ch.paths):
        irs += k * incident_reflect_response(cfg, p, link, m).conj()
    # every path shares the BS responses, so the tensor is a single outer product
    return np.einsum("i,j,k->ijk", a_z, irs, a_y)


def cascaded_channel_matrix(cfg: SystemConfig, ch: ChannelRealization, m: int) -> np.ndarray:
    """``G_m`` as an ``N_b x N_r`` matrix, assembled from ``H_g diag(h_u)``."""
    link = ch.link
    f = cfg.frequency(m)
    a_b = bs_response(cfg, link.bs_elevation, link.bs_azimuth, m)
    a_q = nf_response(cfg, link.irs_elevation, link.irs_azimuth, link.distance, m)
    h_g = link.gain * np.exp(-2j * np.pi * f * link.delay) * np.outer(a_b, a_q.conj())
    h_u = sum(
        p.gain * np.exp(-2j * np.pi * f * p.delay) * nf_response(cfg, p.elevation, p.azimuth, p.distance, m)
        for p in ch.paths
    )
    return h_g * h_u[None, :]


def with_tensors(ch: ChannelRealization) -> ChannelRealization:
    cfg = ch.config
    tensors = tuple(cascaded_channel_tensor(cfg, ch, m) for m in range(1, cfg.subcarriers + 1))
    return ChannelRealization(cfg, ch.link, ch.paths, tensors)


def _cn(rng, size=None):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def sample_scenario(
    cfg: SystemConfig,
    paths: int = 2,
    distance_range: Sequence[float] = DEFAULT_UE_DISTANCE_RANGE,
    rng=None,
    bs_distance: float = DEFAULT_BS_DISTANCE,
) -> ChannelRealization:
    """Draw a random channel realisation.

    Gains (BS link and every UE path) are CN(0, 1); all angles are uniform on
    (0, 2 pi); UE distances are uniform on ``distance_range``; delays are
    distance / c.  ``rng`` is a seed or a ``numpy.random.Generator``.
    """
    if int(paths) != paths or paths < 1:
        raise ValueError(f"number of paths must be a positive integer, got {paths!r}")
    lo, hi = (float(v) for v in distance_range)
    if not 0 < lo <= hi:
        raise ValueError(f"invalid distance range {distance_range!r}")
    if not bs_distance > 0:
        raise ValueError("BS distance must be positive")
    rng = np.random.default_rng(rng)
    ang = rng.uniform(0, 2 * np.pi, size=4)
    link = BsIrsLink(complex(_cn(rng)), ang[0], ang[1], ang[2], ang[3], float(bs_distance))
    ue = []
    for _ in range(int(paths)):
        gain = complex(_cn(rng))
        el, az = rng.uniform(0, 2 * np.pi, size=2)
        r = float(rng.uniform(lo, hi))
        ue.append(UePath(gain, r / SPEED_OF_LIGHT, float(el), float(az), r))
    return with_tensors(ChannelRealization(cfg, link, tuple(ue)))


def irs_aperture(cfg: SystemConfig) -> float:
    """Diagonal extent of the IRS, ``sqrt(((Nr_z-1)d)^2 + ((Nr_y-1)d)^2)``."""
    return math.hypot((cfg.nrz - 1) * cfg.d, (cfg.nry - 1) * cfg.d)


def rayleigh_distance(aperture: float, wavelength: float) -> float:
    """``2 D^2 / lambda``."""
    if aperture < 0 or wavelength <= 0:
        raise ValueError("aperture must be >= 0 and wavelength > 0")
    return 2.0 * aperture**2 / wavelength


def in_near_field(cfg: SystemConfig, distance_range: Sequence[float]) -> bool:
    return max(distance_range) < rayleigh_distance(irs_aperture(cfg), cfg.wavelength)


# --- serialisation -----------------------------------------------------------
#
# Scenario files are JSON objects:
#   {"config": {<SystemConfig fields>},
#    "link": {"gain": [re, im], "bs_elevation", "bs_azimuth",
#             "irs_elevation", "irs_azimuth", "distance"},
#    "paths": [{"gain": [re, im], "delay", "elevation", "azimuth", "distance"}, ...]}
# Tensors are not stored; they are rebuilt on load.


def _cplx(z):
    return [float(np.real(z)), float(np.imag(z))]


def scenario_to_dict(ch: ChannelRealization) -> dict:
    link = asdict(ch.link)
    link["gain"] = _cplx(ch.link.gain)
    paths = []
    for p in ch.paths:
        d = asdict(p)
        d["gain"] = _cplx(p.gain)
        paths.append(d)
    return {"config": asdict(ch.config), "link": link, "paths": paths}


def scenario_from_dict(d: dict) -> ChannelRealization:
    cfg = SystemConfig(**d["config"])
    link = dict(d["link"])
    link["gain"] = complex(*link["gain"])
    paths: List[UePath] = []
    for p in d["paths"]:
        p = dict(p)
        p["gain"] = complex(*p["gain"])
        paths.append(UePath(**p))
    return with_tensors(ChannelRealization(cfg, BsIrsLink(**link), tuple(paths)))


def save_scenario(ch: ChannelRealization, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(ch), fh, indent=2)


def load_scenario(path) -> ChannelRealization:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))

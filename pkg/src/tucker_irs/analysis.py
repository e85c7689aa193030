"""Accuracy metrics and theoretical reference values.

The vectorised observation of one subcarrier is ``y = Q h + n`` with
``Q = kron(I_Ny, V^T, I_Nz)`` and ``h = vec(G)`` in the canonical layout.  The
Fisher information is ``Q^H Q / sigma^2 = kron(I_Ny, V^* V^T, I_Nz) / sigma^2``,
which is kept in factored form.
"""

import math
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from .channel_model import SystemConfig
from .estimator import Hyperparams
from .tensor_core import mode_product

# Dense FIM materialisation limit (N_z N_y N_r).
DENSE_FIM_LIMIT = 512


@dataclass(frozen=True)
class CrlbInputs:
    noise_power: float
    subcarriers: int
    nz: int
    ny: int
    nr: int
    pilots: int

    def __post_init__(self):
        if self.noise_power < 0:
            raise ValueError("noise power must be non-negative")
        for name in ("subcarriers", "nz", "ny", "nr", "pilots"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_config(cls, cfg: SystemConfig, noise_power: float) -> "CrlbInputs":
        return cls(noise_power, cfg.subcarriers, cfg.nz, cfg.ny, cfg.nr, cfg.pilots)


@dataclass(frozen=True)
class MetricReport:
    nmse_linear: float
    crlb: float
    mse: float
    trials: int = 1

    @property
    def nmse_db(self) -> float:
        return to_db(self.nmse_linear)


def to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def nmse(estimates: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> float:
    """Mean over subcarriers of ``||h_hat - h||^2 / ||h||^2``."""
    if len(estimates) != len(truths) or not truths:
        raise ValueError("need equally many (non-zero) estimates and truths")
    acc = 0.0
    for est, tru in zip(estimates, truths):
        est = np.asarray(est)
        tru = np.asarray(tru)
        if est.shape != tru.shape:
            raise ValueError(f"shape mismatch {est.shape} vs {tru.shape}")
        ref = np.linalg.norm(tru.ravel()) ** 2
        if ref == 0:
            raise ValueError("true channel has zero norm")
        acc += np.linalg.norm((est - tru).ravel()) ** 2 / ref
    return float(acc / len(truths))


def mse(estimates, truths) -> float:
    """Sum over subcarriers of the squared error (comparable with :func:`crlb`)."""
    return float(sum(np.linalg.norm((np.asarray(e) - np.asarray(t)).ravel()) ** 2 for e, t in zip(estimates, truths)))


def crlb_subcarrier(inp: CrlbInputs) -> float:
    """``sigma^2 N_z N_y N_r / P`` for one subcarrier with an orthogonal schedule."""
    return inp.noise_power * inp.nz * inp.ny * inp.nr / inp.pilots


def crlb(inp: CrlbInputs) -> float:
    """``sigma^2 M N_z N_y N_r / P`` summed over all subcarriers."""
    return inp.subcarriers * crlb_subcarrier(inp)


@dataclass(frozen=True)
class KroneckerFim:
    """``kron(I_Ny, gram, I_Nz) / sigma^2`` without forming the product."""

    gram: np.ndarray
    noise_power: float
    nz: int
    ny: int

    @property
    def size(self) -> int:
        return self.nz * self.gram.shape[0] * self.ny

    def inverse_trace(self) -> float:
        """``Tr(J^-1) = sigma^2 N_z N_y Tr(gram^-1)``."""
        return float(self.noise_power * self.nz * self.ny * np.real(np.trace(np.linalg.inv(self.gram))))

    def dense(self) -> np.ndarray:
        if self.size > DENSE_FIM_LIMIT:
            raise ValueError(f"dense FIM of size {self.size} exceeds the limit of {DENSE_FIM_LIMIT}")
        return np.kron(np.kron(np.eye(self.ny), self.gram), np.eye(self.nz)) / self.noise_power


def fim(V: np.ndarray, noise_power: float, nz: int, ny: int) -> KroneckerFim:
    if not noise_power > 0:
        raise ValueError("noise power must be positive")
    V = np.asarray(V)
    return KroneckerFim(V.conj() @ V.T, float(noise_power), int(nz), int(ny))


def observation_matrix(V: np.ndarray, nz: int, ny: int) -> np.ndarray:
    """Dense ``Q = kron(I_Ny, V^T, I_Nz)``; only for small test problems."""
    return np.kron(np.kron(np.eye(ny), np.asarray(V).T), np.eye(nz))


def trace_bound_check(V: np.ndarray, tol: float = 1e-9):
    """Compare ``Tr((V^* V^T)^-1)`` with its lower bound ``N_r^2 / Tr(V^* V^T)``.

    Returns ``(lhs, rhs, equality)``.  Equality holds for schedules whose
    transpose has orthogonal columns.
    """
    V = np.asarray(V)
    gram = V.conj() @ V.T
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise ValueError("V^* V^T is singular")
    lhs = float(np.real(np.trace(np.linalg.inv(gram))))
    rhs = float(gram.shape[0] ** 2 / np.real(np.trace(gram)))
    if lhs < rhs - tol * max(1.0, abs(rhs)):
        raise ArithmeticError(f"trace bound violated: {lhs} < {rhs}")
    return lhs, rhs, abs(lhs - rhs) <= tol * max(1.0, abs(rhs))


def ls_oracle_estimate(y: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Least-squares channel estimate ``y x_2 pinv(V^T)``."""
    V = np.asarray(V)
    if V.shape[1] < V.shape[0]:
        raise ValueError(f"least squares needs P >= N_r (P={V.shape[1]}, N_r={V.shape[0]})")
    return mode_product(y, np.linalg.pinv(V.T), 2)


def complexity_estimate(cfg: SystemConfig, hp: Hyperparams, ranks=None, t_max=None) -> Dict[str, float]:
    """Multiply counts from the complexity analysis.

    ``ranks`` defaults to ``hp.mode_ranks`` and then to the thin HOSVD ranks;
    ``t_max`` (default ``hp.t_max``) may be 0.
    ``total`` is ``(factor + P N_r^2) M t_max``, the overall expression as
    published; ``hosvd`` and ``core`` are reported alongside it.
    """
    nz, ny, nr, P, M = cfg.nz, cfg.ny, cfg.nr, cfg.pilots, cfg.subcarriers
    nb = nz * ny
    n_p = nz * P * ny
    if ranks is None:
        ranks = hp.mode_ranks or (min(nz, P * ny), min(P, nz * ny), min(ny, nz * P))
    gz, gr, gy = ranks
    hosvd_ops = P * nb**2
    core_ops = gz * gr * gy * nz + nz * gr * gy * P + n_p * gy
    factor_ops = (
        P * nb * gz * gr * gy
        + (gz**2 + gr**2 + gy**2) * P * nb
        + gz**3 * nz
        + gr**3 * P
        + gy**3 * ny
    )
    t_max = hp.t_max if t_max is None else t_max
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    total = (factor_ops + P * nr**2) * M * t_max
    return {
        "hosvd": float(hosvd_ops),
        "core": float(core_ops),
        "factor": float(factor_ops),
        "total": float(total),
        "log10_total": math.log10(total) if total > 0 else -math.inf,
    }

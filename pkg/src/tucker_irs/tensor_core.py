"""Dense complex third-order tensor algebra.

Tensors are plain ``numpy`` arrays of shape ``(I1, I2, I3)``.  Modes are
numbered 1..3 as in the usual multilinear notation.  The canonical linear
layout is mode-1 fastest (Fortran order), and the mode-n unfolding orders its
columns with the remaining indices in increasing mode order, lower mode
fastest.  With this convention

    unfold(X x_1 A x_2 B x_3 C, n) = A_n @ unfold(X, n) @ kron(A_k, A_j).T

where ``k > j`` are the two remaining modes, and ``vec(X)`` (Fortran order)
equals the column-stacked mode-1 unfolding.
"""

from typing import NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "HosvdResult",
    "as_tensor",
    "vec",
    "unvec",
    "unfold",
    "fold",
    "mode_product",
    "multi_mode_product",
    "hosvd",
    "frobenius_norm",
    "inner_product",
    "hadamard",
    "slice_energies",
]


class HosvdResult(NamedTuple):
    core: np.ndarray
    factors: tuple
    mode_ranks: tuple

    def reconstruct(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)


def _check_mode(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode - 1


def as_tensor(t) -> np.ndarray:
    """Validate and return ``t`` as a complex 3-way array."""
    t = np.asarray(t)
    if t.ndim != 3 or min(t.shape) < 1:
        raise ValueError(f"expected a non-empty 3-way array, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor has non-finite entries")
    return t.astype(np.complex128, copy=False)


def vec(t: np.ndarray) -> np.ndarray:
    """Canonical vectorisation (mode-1 index fastest)."""
    return np.asarray(t).reshape(-1, order="F")


def unvec(v: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    return np.asarray(v).reshape(tuple(dims), order="F")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding, shape ``(I_mode, prod(other extents))``."""
    ax = _check_mode(mode)
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"expected a 3-way array, got shape {t.shape}")
    return np.moveaxis(t, ax, 0).reshape(t.shape[ax], -1, order="F")


def fold(m: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    ax = _check_mode(mode)
    dims = tuple(int(d) for d in dims)
    m = np.asarray(m)
    if len(dims) != 3:
        raise ValueError(f"dims must have three extents, got {dims}")
    cols = int(np.prod(dims)) // dims[ax]
    if m.shape != (dims[ax], cols):
        raise ValueError(
            f"matrix of shape {m.shape} cannot be folded along mode {mode} "
            f"into dims {dims}; expected {(dims[ax], cols)}"
        )
    rest = [dims[i] for i in range(3) if i != ax]
    return np.moveaxis(m.reshape([dims[ax]] + rest, order="F"), 0, ax)


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """n-mode product ``t x_mode m``.

    The extent of ``t`` along ``mode`` is replaced by ``m.shape[0]``.
    """
    ax = _check_mode(mode)
    t = np.asarray(t)
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[1] != t.shape[ax]:
        raise ValueError(
            f"matrix of shape {m.shape} does not match extent {t.shape[ax]} "
            f"of mode {mode}"
        )
    # tensordot puts the new axis last; move it back into place
    out = np.tensordot(t, m, axes=([ax], [1]))
    return np.moveaxis(out, -1, ax)


def multi_mode_product(t: np.ndarray, mats: Sequence[Optional[np.ndarray]]) -> np.ndarray:
    """``t x_1 mats[0] x_2 mats[1] x_3 mats[2]``; ``None`` entries are skipped."""
    out = np.asarray(t)
    for n, m in enumerate(mats, start=1):
        if m is not None:
            out = mode_product(out, m, n)
    return out


def hosvd(t: np.ndarray, ranks: Optional[Sequence[int]] = None) -> HosvdResult:
    """Higher-order SVD.

    Each factor holds the leading left singular vectors of the corresponding
    unfolding (singular values in descending order) and the core is
    ``t x_1 U1^H x_2 U2^H x_3 U3^H``.  Without ``ranks`` the thin rank
    ``min(I_n, prod(other extents))`` is kept in every mode, which makes the
    reconstruction exact.  A requested rank may exceed the thin rank (up to
    ``I_n``); the extra columns complete an orthonormal basis and carry zero
    core energy.
    """
    t = as_tensor(t)
    factors = []
    used = []
    for n in (1, 2, 3):
        mat = unfold(t, n)
        thin = min(mat.shape)
        r = thin if ranks is None else int(ranks[n - 1])
        if not 1 <= r <= mat.shape[0]:
            raise ValueError(f"rank {r} for mode {n} outside [1, {mat.shape[0]}]")
        try:
            u = np.linalg.svd(mat, full_matrices=r > thin)[0]
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"SVD of mode-{n} unfolding failed: {exc}") from exc
        factors.append(u[:, :r])
        used.append(r)
    core = multi_mode_product(t, [u.conj().T for u in factors])
    return HosvdResult(core, tuple(factors), tuple(used))


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t).ravel()))


def _same_dims(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"dimension mismatch: {np.shape(a)} vs {np.shape(b)}")


def inner_product(a: np.ndarray, b: np.ndarray) -> complex:
    """``<a, b> = sum(conj(a) * b)``."""
    _same_dims(a, b)
    return complex(np.vdot(np.asarray(a).ravel(), np.asarray(b).ravel()))


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_dims(a, b)
    return np.asarray(a) * np.asarray(b)


def slice_energies(t: np.ndarray, mode: int) -> np.ndarray:
    """Squared Frobenius norm of every slice ``t[..., i, ...]`` along ``mode``."""
    return np.sum(np.abs(unfold(t, mode)) ** 2, axis=1)

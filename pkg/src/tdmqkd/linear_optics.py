"""Single-excitation linear optics: mode vectors, transfer matrices, dB conversion.

A mode vector is a 1-D complex ``numpy`` array holding one amplitude per
spatial path. A :class:`TransferMatrix` maps ``n_in`` input amplitudes to
``n_out`` output amplitudes; loss is carried inside the matrix as columns with
squared norm below one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EPS_NUM = 1e-12
EPS_CASCADE = 1e-9


def db_to_linear(loss_db: float) -> float:
    """Power transmission for a loss given in dB. ``inf`` maps to 0."""
    if loss_db < 0 or math.isnan(loss_db):
        raise ValueError(f"loss must be >= 0 dB, got {loss_db!r}")
    if math.isinf(loss_db):
        return 0.0
    return 10.0 ** (-loss_db / 10.0)


def linear_to_db(transmission: float) -> float:
    if not 0 < transmission <= 1:
        raise ValueError(f"transmission must lie in (0, 1], got {transmission!r}")
    return -10.0 * math.log10(transmission)


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """Complex amplitude map of shape ``(n_out, n_in)``."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or 0 in m.shape:
            raise ValueError(f"transfer matrix must be a non-empty 2-D array, got shape {m.shape}")
        col_norms = np.sum(np.abs(m) ** 2, axis=0)
        if np.any(col_norms > 1 + EPS_CASCADE):
            raise ValueError(f"column power exceeds 1: max {col_norms.max():.16g}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def n_in(self) -> int:
        return self.entries.shape[1]

    @property
    def n_out(self) -> int:
        return self.entries.shape[0]

    def column_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.entries) ** 2, axis=0)

    def is_unitary(self, tol: float = EPS_NUM) -> bool:
        if self.n_in != self.n_out:
            return False
        m = self.entries
        return bool(np.allclose(m.conj().T @ m, np.eye(self.n_in), atol=tol, rtol=0))

    def dagger(self) -> "TransferMatrix":
        return TransferMatrix(self.entries.conj().T)

    def __matmul__(self, other):
        if isinstance(other, TransferMatrix):
            return compose(self, other)
        return apply(self, other)

    def __eq__(self, other):
        if not isinstance(other, TransferMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and np.array_equal(self.entries, other.entries)

    __hash__ = None

    def __repr__(self):
        return f"TransferMatrix({self.n_out}x{self.n_in})"


def mode_vector(amplitudes: Sequence[complex]) -> np.ndarray:
    v = np.asarray(amplitudes, dtype=complex)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("mode vector must be 1-D with at least one entry")
    if np.sum(np.abs(v) ** 2) > 1 + EPS_CASCADE:
        raise ValueError("mode vector norm exceeds 1")
    return v


def apply(m: TransferMatrix, v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or v.shape[0] != m.n_in:
        raise ValueError(f"cannot apply {m.n_out}x{m.n_in} matrix to vector of length {v.shape}")
    return m.entries @ v


def compose(later: TransferMatrix, earlier: TransferMatrix) -> TransferMatrix:
    """Matrix of ``earlier`` followed by ``later``."""
    if later.n_in != earlier.n_out:
        raise ValueError(
            f"cannot compose: later takes {later.n_in} modes, earlier emits {earlier.n_out}"
        )
    return TransferMatrix(later.entries @ earlier.entries)


def cascade(*stages: TransferMatrix) -> TransferMatrix:
    """Compose stages listed in propagation order (first element acts first)."""
    if not stages:
        raise ValueError("empty cascade")
    out = stages[0]
    for stage in stages[1:]:
        out = compose(stage, out)
    return out


def identity(n: int) -> TransferMatrix:
    return TransferMatrix(np.eye(n, dtype=complex))


def mmi_matrix() -> TransferMatrix:
    """Symmetric 50:50 coupler, ``(1/sqrt2) [[1, i], [i, 1]]``."""
    return TransferMatrix(np.array([[1, 1j], [1j, 1]]) / math.sqrt(2))


def phase_shifter(phases: Sequence[float]) -> TransferMatrix:
    return TransferMatrix(np.diag(np.exp(1j * np.asarray(phases, dtype=float))))


def uniform_loss(n: int, loss_db: float) -> TransferMatrix:
    return TransferMatrix(math.sqrt(db_to_linear(loss_db)) * np.eye(n, dtype=complex))


def embed(m: TransferMatrix, modes: Sequence[int], n: int) -> TransferMatrix:
    """Lift a k-mode square component onto ``modes`` of an n-mode register."""
    if m.n_in != m.n_out or m.n_in != len(modes):
        raise ValueError("embed needs a square matrix matching the mode list")
    if len(set(modes)) != len(modes) or min(modes) < 0 or max(modes) >= n:
        raise ValueError(f"bad mode list {modes} for register of {n}")
    full = np.eye(n, dtype=complex)
    idx = np.asarray(modes)
    full[np.ix_(idx, idx)] = m.entries
    return TransferMatrix(full)


def powers(v) -> np.ndarray:
    return np.abs(np.asarray(v)) ** 2


def equal_up_to_global_phase(a, b, tol: float = EPS_NUM) -> bool:
    """True when ``a == exp(i*theta) * b`` for some theta."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.shape != b.shape:
        return False
    k = int(np.argmax(np.abs(b)))
    if abs(b[k]) < tol:
        return bool(np.allclose(a, 0, atol=tol))
    if abs(a[k]) < tol:
        return False
    phase = a[k] / b[k]
    phase /= abs(phase)
    return bool(np.allclose(a, phase * b, atol=tol, rtol=0))

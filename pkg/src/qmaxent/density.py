"""Hermitian matrices and density operators.

Matrices are plain ``numpy`` complex arrays; :class:`DensityOperator` caches
the spectral decomposition (eigenvalues descending) that every entropy
evaluation needs.  Dimensions are capped at :data:`MAX_DIM`.

The text exchange format holds one matrix row per line, entries separated
by whitespace, each entry written ``re,im`` (a bare real is also accepted).
Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from .functionals import EntropicFunctional

__all__ = [
    "DensityOperator",
    "MAX_DIM",
    "MatrixFormatError",
    "degenerate_groups",
    "dephase",
    "eigh",
    "entropy",
    "format_matrix",
    "is_density",
    "is_hermitian",
    "parse_matrix",
    "random_density",
    "random_unitary",
    "read_matrix",
    "write_matrix",
]

MAX_DIM = 64
HERMITIAN_TOL = 1e-12
ZERO_CLAMP = 1e-12
DEGENERACY_GAP = 1e-9


class MatrixFormatError(ValueError):
    pass


def is_hermitian(M, tol: float = HERMITIAN_TOL) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    return bool(np.max(np.abs(M - M.conj().T), initial=0.0) <= tol * scale)


def eigh(H, tol: float = HERMITIAN_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Returns ``(w, V)`` with ``H = V @ diag(w) @ V^dagger``.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if H.shape[0] > MAX_DIM:
        raise ValueError(f"dimension {H.shape[0]} exceeds the supported maximum {MAX_DIM}")
    if not is_hermitian(H, tol):
        raise ValueError("matrix is not Hermitian")
    # symmetrize so LAPACK sees exactly Hermitian input
    w, V = np.linalg.eigh(0.5 * (H + H.conj().T))
    return w[::-1].copy(), V[:, ::-1].copy()


def degenerate_groups(values: Sequence[float], gap: float = DEGENERACY_GAP) -> List[List[int]]:
    """Split sorted eigenvalues into runs whose consecutive gaps are < ``gap``."""
    groups: List[List[int]] = []
    for i, v in enumerate(values):
        if groups and abs(values[groups[-1][-1]] - v) < gap:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A density matrix with its cached spectrum.

    Use :meth:`from_matrix` for validated construction.  :meth:`from_spectrum`
    trusts its input and skips the unit-trace check; the max-ent solver uses
    it for intermediate, not yet normalized, operators.
    """

    matrix: np.ndarray
    spectrum: np.ndarray
    eigenbasis: np.ndarray

    @classmethod
    def from_matrix(cls, M, tol: float = 1e-10) -> "DensityOperator":
        M = np.asarray(M, dtype=complex)
        w, V = eigh(M, tol=max(tol, HERMITIAN_TOL))
        if w[-1] < -tol:
            raise ValueError(f"matrix has negative eigenvalue {w[-1]!r}")
        if abs(w.sum() - 1.0) > tol:
            raise ValueError(f"trace {w.sum()!r} differs from 1")
        w = np.where(w < ZERO_CLAMP, 0.0, w)
        return cls(0.5 * (M + M.conj().T), w, V)

    @classmethod
    def from_spectrum(cls, p, V) -> "DensityOperator":
        p = np.asarray(p, dtype=float)
        V = np.asarray(V, dtype=complex)
        order = np.argsort(-p, kind="stable")
        p, V = p[order], V[:, order]
        p = np.where(np.abs(p) < ZERO_CLAMP, 0.0, p)
        return cls((V * p) @ V.conj().T, p, V)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(self.spectrum.sum())

    def expectation(self, O) -> float:
        return float(np.real(np.trace(self.matrix @ np.asarray(O))))

    def largest_eigenvalue(self) -> float:
        return float(self.spectrum[0])


def entropy(rho: Union[DensityOperator, np.ndarray], fn: EntropicFunctional) -> float:
    """Trace-form entropy S_f(rho) = sum_i f(p_i)."""
    if not isinstance(rho, DensityOperator):
        rho = DensityOperator.from_matrix(rho)
    p = np.where(rho.spectrum < ZERO_CLAMP, 0.0, rho.spectrum)
    return float(np.sum(fn.f(p)))


def dephase(rho: DensityOperator, basis, tol: float = 1e-10) -> DensityOperator:
    """Drop the off-diagonal elements of rho in the orthonormal ``basis`` (columns)."""
    U = np.asarray(basis, dtype=complex)
    n = rho.dim
    if U.shape != (n, n):
        raise ValueError(f"basis shape {U.shape} does not match dimension {n}")
    if np.max(np.abs(U.conj().T @ U - np.eye(n))) > tol:
        raise ValueError("basis is not orthonormal")
    diag = np.real(np.einsum("ki,kl,li->i", U.conj(), rho.matrix, U))
    return DensityOperator.from_spectrum(diag, U)


def random_density(n: int, seed: int) -> DensityOperator:
    """Seeded Ginibre density G G^dagger / Tr(G G^dagger)."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    M = G @ G.conj().T
    return DensityOperator.from_matrix(M / np.trace(M).real)


def random_unitary(n: int, seed: int) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    rng = np.random.default_rng(seed)
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def is_density(M, tol: float = 1e-10) -> bool:
    M = np.asarray(M, dtype=complex)
    if not is_hermitian(M, max(tol, HERMITIAN_TOL)):
        return False
    w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    return bool(w.min() >= -tol and abs(w.sum() - 1.0) <= tol)


# --------------------------------------------------------------------------
# text exchange format


def _parse_entry(token: str) -> complex:
    re_part, sep, im_part = token.partition(",")
    return complex(float(re_part), float(im_part) if sep else 0.0)


def parse_matrix(lines: Iterable[str], source: str = "<matrix>") -> np.ndarray:
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([_parse_entry(tok) for tok in line.split()])
        except ValueError:
            raise MatrixFormatError(f"{source}: row {lineno}: cannot parse {line!r}") from None
        if len(rows[-1]) != len(rows[0]):
            raise MatrixFormatError(
                f"{source}: row {lineno}: expected {len(rows[0])} entries, got {len(rows[-1])}")
    if not rows:
        raise MatrixFormatError(f"{source}: no matrix rows found")
    if len(rows) != len(rows[0]):
        raise MatrixFormatError(f"{source}: matrix is {len(rows)}x{len(rows[0])}, not square")
    return np.array(rows, dtype=complex)


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    with path.open() as fh:
        return parse_matrix(fh, source=str(path))


def format_matrix(M) -> str:
    M = np.asarray(M, dtype=complex)
    return "".join(
        " ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) + "\n" for row in M)


def write_matrix(path, M) -> None:
    Path(path).write_text(format_matrix(M))

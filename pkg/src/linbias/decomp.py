"""Orthogonal decompositions of data tensors and even-vector utilities.

A data tensor is orthogonally decomposable when it can be written as
M(x) = sum_j [S x]_j ([U_1]_{:,j} (x) ... (x) [U_L]_{:,j}) with each U_l
having orthonormal columns.  The diagonal architecture admits the trivial
all-identity decomposition; full-length circular convolution is
diagonalized by the DFT with S = d^{(L-1)/2} F and U_l = conj(F).

Complex values are kept as native complex arrays throughout.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .solvers import TOLERANCES
from .tensors import DataTensor


@dataclass(frozen=True)
class OrthoDecomposition:
    """(S, U_1..U_L, m) with U_l^H U_l = I_m and S of full column rank."""
    S: np.ndarray            # m x d, possibly complex
    U: List[np.ndarray]      # L matrices, k_l x m
    m: int

    def __post_init__(self):
        S = np.asarray(self.S)
        U = [np.asarray(u) for u in self.U]
        if S.shape[0] != self.m:
            raise ValueError("S must have m rows")
        for l, u in enumerate(U):
            if u.shape[1] != self.m:
                raise ValueError(f"U_{l + 1} must have m columns")
            gram = u.conj().T @ u
            if np.max(np.abs(gram - np.eye(self.m))) > TOLERANCES["ortho"]:
                raise ValueError(f"U_{l + 1} does not have orthonormal columns")
        sv = np.linalg.svd(S, compute_uv=False)
        if len(sv) < min(S.shape) or sv[-1] <= 1e-12 * sv[0]:
            raise ValueError("S must have full column rank")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "U", U)

    @property
    def depth(self) -> int:
        return len(self.U)


def dft_matrix(d: int) -> np.ndarray:
    """Unitary DFT matrix F with [F]_{jk} = exp(-i 2pi (j-1)(k-1)/d)/sqrt(d)."""
    if d < 1:
        raise ValueError("d must be positive")
    j, k = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    return np.exp(-2j * np.pi * j * k / d) / np.sqrt(d)


def diag_decomposition(d: int, L: int) -> OrthoDecomposition:
    """All-identity decomposition of the diagonal data tensor, m = d."""
    eye = np.eye(d)
    return OrthoDecomposition(S=eye, U=[eye.copy() for _ in range(L)], m=d)


def conv_decomposition(d: int, L: int, filter_sizes: Sequence[int] = None
                       ) -> OrthoDecomposition:
    """DFT decomposition of the full-length circular-convolution tensor.

    Only valid when every filter is full length (k_l = d); small filters
    fall outside this construction and must go through the matrix SVD path
    of the two-layer predictors instead.
    """
    if filter_sizes is not None and any(int(k) != d for k in filter_sizes):
        raise ValueError(
            "conv_decomposition needs full-length filters (all k_l = d); "
            "use the two-layer SVD predictors for small filters")
    F = dft_matrix(d)
    S = d ** ((L - 1) / 2.0) * F
    return OrthoDecomposition(S=S, U=[F.conj() for _ in range(L)], m=d)


def reconstruct(decomp: OrthoDecomposition, x) -> np.ndarray:
    """Assemble sum_j [S x]_j (outer product of the j-th columns of U_l)."""
    x = np.asarray(x)
    coeff = decomp.S @ x  # length m
    shape = tuple(u.shape[0] for u in decomp.U)
    out = np.zeros(shape, dtype=complex)
    for j in range(decomp.m):
        term = coeff[j]
        prod = decomp.U[0][:, j]
        for u in decomp.U[1:]:
            prod = np.multiply.outer(prod, u[:, j])
        out = out + term * prod
    return out


def verify_decomposition(builder, decomp: OrthoDecomposition, sample_xs) -> float:
    """Max entrywise reconstruction error of the decomposition over samples.

    The reconstruction must be real up to roundoff; a larger imaginary
    residue raises, since it means S/U do not represent a real tensor.
    """
    worst = 0.0
    for x in sample_xs:
        target = builder(np.asarray(x, dtype=float))
        arr = target.array if isinstance(target, DataTensor) else np.asarray(target)
        recon = reconstruct(decomp, x)
        if recon.shape != arr.shape:
            raise ValueError(
                f"decomposition shape {recon.shape} does not match tensor "
                f"shape {arr.shape}")
        imag = np.max(np.abs(recon.imag))
        if imag > TOLERANCES["imag_residue"]:
            raise ValueError(f"reconstruction has imaginary residue {imag:.3e}")
        worst = max(worst, float(np.max(np.abs(recon.real - arr))))
    return worst


def is_even(x, tol: float = 1e-10) -> bool:
    """Whether x is even around its origin: x[j] == x[d-j] for 0 < j < d.

    Every length-1 or length-2 vector is trivially even (no constrained
    pairs).
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    for j in range(1, (d - 1) // 2 + 1):
        if abs(x[j] - x[d - j]) > tol:
            return False
    return True


def project_even(x) -> np.ndarray:
    """Nearest even vector: average each mirror pair."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    out = x.copy()
    for j in range(1, (d - 1) // 2 + 1):
        avg = 0.5 * (x[j] + x[d - j])
        out[j] = avg
        out[d - j] = avg
    return out


def dft_of_even_is_real_even(x) -> dict:
    """Check that the DFT of a real even vector is itself real and even.

    Returns the measured imaginary residue and the evenness verdict of the
    real part; both must pass for the conv regression reduction to apply.
    """
    x = np.asarray(x, dtype=float)
    F = dft_matrix(x.shape[0])
    fx = F @ x
    max_imag = float(np.max(np.abs(fx.imag)))
    return {
        "max_imag": max_imag,
        "real_part_even": is_even(fx.real),
        "passes": max_imag <= TOLERANCES["imag_residue"] and is_even(fx.real),
    }


def real_conv_transform(d: int, L: int) -> np.ndarray:
    """Real replacement for the conv S matrix, valid on even vectors.

    For real even x the DFT F x is real, so d^{(L-1)/2} Re(F) reproduces
    S x while staying real; this is what lets the regression predictors run
    entirely in real arithmetic for even data and even initializations.
    """
    F = dft_matrix(d)
    return d ** ((L - 1) / 2.0) * F.real

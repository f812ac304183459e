"""Dense order-L data tensors, multilinear multiplication, and the three
architecture-specific builders (diagonal, convolutional, fully connected).

A linear tensor network computes f(x) = M(x) o (v_1, ..., v_L) where M(x)
is an order-L tensor that depends linearly on the input x and encodes the
architecture's wiring.  The same model also equals x^T beta for a unique
coefficient vector beta, recovered here by probing basis vectors.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import solvers

# Dense storage cap: refuse tensors with more than this many entries.
MAX_TENSOR_ENTRIES = 10**7


@dataclass(frozen=True)
class DataTensor:
    """Dense order-L tensor with shape (k1, ..., kL), row-major storage."""
    array: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.array, dtype=float))
        if arr.ndim < 1:
            raise ValueError("DataTensor must have order >= 1")
        if arr.size > MAX_TENSOR_ENTRIES:
            raise ValueError(
                f"tensor with {arr.size} entries exceeds the dense cap of "
                f"{MAX_TENSOR_ENTRIES}")
        object.__setattr__(self, "array", arr)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.array.shape

    @property
    def order(self) -> int:
        return self.array.ndim


def multilinear_mul(A, maps: Sequence):
    """Multilinear multiplication A o (B_1^T, ..., B_L^T).

    Each entry of `maps` is matched to one mode of A: a (k_l, p_l) matrix
    replaces mode l by a length-p_l mode, a length-k_l vector contracts the
    mode away, and None leaves the mode untouched.  Contracting every mode
    with a vector returns a plain scalar.
    """
    arr = A.array if isinstance(A, DataTensor) else np.asarray(A, dtype=float)
    L = arr.ndim
    if len(maps) != L:
        raise ValueError(f"expected {L} maps, got {len(maps)}")

    out = arr
    axis = 0
    vector_modes = 0
    for mode, m in enumerate(maps):
        if m is None:
            axis += 1
            continue
        m = np.asarray(m, dtype=float)
        if m.shape[0] != arr.shape[mode]:
            raise ValueError(
                f"mode {mode + 1}: map has inner dimension {m.shape[0]}, "
                f"tensor mode has size {arr.shape[mode]}")
        if m.ndim == 1:
            out = np.tensordot(out, m, axes=(axis, 0))
            vector_modes += 1
        elif m.ndim == 2:
            out = np.moveaxis(np.tensordot(out, m, axes=(axis, 0)), -1, axis)
            axis += 1
        else:
            raise ValueError(f"mode {mode + 1}: map must be a vector or matrix")

    if out.ndim == 0:
        return float(out)
    return DataTensor(out)


def build_diag_tensor(x, L: int) -> DataTensor:
    """Order-L tensor whose superdiagonal is x and all other entries are 0."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    if d < 1 or L < 2:
        raise ValueError("need d >= 1 and L >= 2")
    arr = np.zeros((d,) * L)
    idx = np.arange(d)
    arr[(idx,) * L] = x
    return DataTensor(arr)


def build_conv_tensor(x, filter_sizes: Sequence[int]) -> DataTensor:
    """Circular-convolution data tensor.

    Entry (j_1, ..., j_L) equals x at circular position sum_l j_l - L + 1
    in 1-based indexing; with 0-based indices this is simply
    x[(j_1 + ... + j_L) mod d].  Requires k_l <= d and k_L = d.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    sizes = tuple(int(k) for k in filter_sizes)
    if len(sizes) < 2:
        raise ValueError("need L >= 2 filter sizes")
    if any(k < 1 or k > d for k in sizes):
        raise ValueError("filter sizes must satisfy 1 <= k_l <= d")
    if sizes[-1] != d:
        raise ValueError(f"last filter size must equal d={d}, got {sizes[-1]}")
    grids = np.indices(sizes)
    pos = np.remainder(grids.sum(axis=0), d)
    return DataTensor(x[pos])


def build_fc_tensor(x, widths: Sequence[int]) -> DataTensor:
    """Fully-connected data tensor by the recursive block-diagonal embedding.

    Starting from T_1 = x, each step places the previous tensor as the j-th
    diagonal block of the new last-but-one mode, for j = 1..d_{l}.  For
    L = 2 this is the Kronecker product I_{d2} (x) x.
    """
    dims = tuple(int(w) for w in widths)
    if any(w < 1 for w in dims):
        raise ValueError("widths must be positive")
    if len(dims) < 2:
        raise ValueError("need L >= 2 widths")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != dims[0]:
        raise ValueError(f"x has length {x.shape[0]}, expected d1={dims[0]}")

    T = x
    for l in range(1, len(dims)):
        dl = dims[l]
        block = T.shape[-1]  # previous width d_{l-1}, the mode being expanded
        new_shape = T.shape[:-1] + (block * dl, dl)
        size = int(np.prod(new_shape))
        if size > MAX_TENSOR_ENTRIES:
            raise ValueError(
                f"fully-connected tensor would need {size} entries, beyond the "
                f"dense cap of {MAX_TENSOR_ENTRIES}")
        new = np.zeros(new_shape)
        for j in range(dl):
            new[..., j * block:(j + 1) * block, j] = T
        T = new
    return DataTensor(T)


@dataclass(frozen=True)
class TensorNetwork:
    """Architecture tag + layer parameter vectors + data-tensor builder."""
    arch: str                       # diagonal | convolutional | fully_connected | custom
    dims: dict                      # architecture dimension plan
    params: List[np.ndarray]        # v_1 ... v_L
    builder: Callable[[np.ndarray], DataTensor]
    param_shapes: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        params = [np.asarray(v, dtype=float) for v in self.params]
        object.__setattr__(self, "params", params)
        shapes = tuple(v.shape[0] for v in params)
        object.__setattr__(self, "param_shapes", shapes)
        probe = self.builder(np.zeros(self.input_dim))
        if probe.shape != shapes:
            raise ValueError(
                f"parameter lengths {shapes} do not match tensor shape {probe.shape}")

    @property
    def depth(self) -> int:
        return len(self.params)

    @property
    def input_dim(self) -> int:
        return int(self.dims["d"])

    def with_params(self, params) -> "TensorNetwork":
        return TensorNetwork(arch=self.arch, dims=self.dims, params=list(params),
                             builder=self.builder)


def diagonal_network(d: int, L: int, params=None) -> TensorNetwork:
    if params is None:
        params = [np.zeros(d) for _ in range(L)]
    return TensorNetwork(arch="diagonal", dims={"d": d, "L": L}, params=params,
                         builder=lambda x: build_diag_tensor(x, L))


def convolutional_network(d: int, filter_sizes, params=None) -> TensorNetwork:
    sizes = tuple(int(k) for k in filter_sizes)
    if params is None:
        params = [np.zeros(k) for k in sizes]
    return TensorNetwork(arch="convolutional",
                         dims={"d": d, "filter_sizes": sizes, "L": len(sizes)},
                         params=params,
                         builder=lambda x: build_conv_tensor(x, sizes))


def fully_connected_network(widths, params=None) -> TensorNetwork:
    dims = tuple(int(w) for w in widths)
    L = len(dims)
    if params is None:
        params = [np.zeros(dims[l] * dims[l + 1]) for l in range(L - 1)]
        params.append(np.zeros(dims[-1]))
    return TensorNetwork(arch="fully_connected",
                         dims={"d": dims[0], "widths": dims, "L": L},
                         params=params,
                         builder=lambda x: build_fc_tensor(x, dims))


def custom_network(d: int, builder, params) -> TensorNetwork:
    """Network over a caller-supplied linear builder x -> DataTensor."""
    return TensorNetwork(arch="custom", dims={"d": d}, params=params,
                         builder=builder)


def forward(net: TensorNetwork, x) -> float:
    """f(x) = M(x) o (v_1, ..., v_L)."""
    return multilinear_mul(net.builder(np.asarray(x, dtype=float)), net.params)


def fc_weight_matrices(net: TensorNetwork):
    """Reshape the flat fully-connected parameters into weight matrices.

    Layer l < L becomes a (d_l, d_{l+1}) matrix in column-major order; the
    last layer stays a d_L vector.
    """
    widths = net.dims["widths"]
    L = len(widths)
    mats = [net.params[l].reshape(widths[l], widths[l + 1], order="F")
            for l in range(L - 1)]
    return mats, net.params[-1]


def direct_forward(arch: str, params, x, dims: Optional[dict] = None) -> float:
    """Reference implementation of the layered products, used to
    property-test the tensor path.  Same contract as `forward`."""
    x = np.asarray(x, dtype=float)
    params = [np.asarray(v, dtype=float) for v in params]
    if arch == "diagonal":
        out = x.copy()
        for v in params[:-1]:
            out = out * v
        return float(out @ params[-1])
    if arch == "convolutional":
        d = x.shape[0]
        out = x
        for v in params[:-1]:
            # circular correlation: out_i = sum_j out[(i + j) mod d] v_j
            k = v.shape[0]
            nxt = np.zeros(d)
            for i in range(d):
                for j in range(k):
                    nxt[i] += out[(i + j) % d] * v[j]
            out = nxt
        return float(out @ params[-1])
    if arch == "fully_connected":
        widths = dims["widths"]
        out = x
        for l in range(len(widths) - 1):
            W = params[l].reshape(widths[l], widths[l + 1], order="F")
            out = out @ W
        return float(out @ params[-1])
    raise ValueError(f"direct_forward does not support arch {arch!r}")


def linear_coefficients(net: TensorNetwork) -> np.ndarray:
    """The unique beta with f(x) = x^T beta, via basis-vector probing."""
    d = net.input_dim
    beta = np.empty(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        beta[j] = forward(net, e)
    return beta


def singular_residual(A: DataTensor, vectors: Sequence, s: float) -> np.ndarray:
    """Per-mode residuals ||s u_l - A o (u_1, ..., I, ..., u_L)||.

    All residuals vanish exactly when (u_1..u_L, s) is a singular tuple of
    the tensor A.  Inputs must be unit vectors.
    """
    vecs = [np.asarray(u, dtype=float) for u in vectors]
    if len(vecs) != A.order:
        raise ValueError(f"expected {A.order} vectors, got {len(vecs)}")
    for l, u in enumerate(vecs):
        if abs(np.linalg.norm(u) - 1.0) > 1e-8:
            raise ValueError(f"mode {l + 1}: vector is not unit norm")
    res = np.empty(A.order)
    for l in range(A.order):
        maps = [v if k != l else None for k, v in enumerate(vecs)]
        contracted = multilinear_mul(A, maps)
        res[l] = np.linalg.norm(s * vecs[l] - contracted.array)
    return res


@dataclass(frozen=True)
class Dataset:
    """Design matrix, labels/targets, and the learning task."""
    X: np.ndarray
    y: np.ndarray
    task: str  # classification | regression
    margin: Optional[float] = None  # optimal hard-margin value (classification)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be an n x d matrix")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one entry per row of X")
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one point")
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        sv = np.linalg.svd(X, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ValueError("X must have full row rank")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.task == "classification":
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise ValueError("classification labels must be +-1")
            sol = solvers.hard_margin_l2(X, y)  # raises when inseparable
            object.__setattr__(self, "margin", sol.margin)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

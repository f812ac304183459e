"""Gradient-flow simulation for linear tensor networks.

Integrates v_l' = M(-X^T r) o (v_1, ..., I, ..., v_L) with fixed-step
euler or rk4, records coefficient-space trajectories, and exposes the
conservation-law monitors (per-coordinate balance gaps in the transformed
space, Gram-matrix differences for fully-connected nets).

The loss is sum_i exp(-y_i f_i) for classification and
0.5 * sum_i (f_i - y_i)^2 for regression.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .solvers import NumericError
from .tensors import Dataset, TensorNetwork, fc_weight_matrices

# beyond this margin exp underflows to exactly zero; flagged as saturation
_SATURATION_MARGIN = 700.0


@dataclass(frozen=True)
class FlowConfig:
    alpha: float
    init_directions: List[np.ndarray]
    integrator: str = "euler"          # euler | rk4
    step: float = 1e-3
    max_steps: int = 10000
    stop_loss: float = 1e-14
    record_every: int = 100
    record_params: bool = True

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("initial scale alpha must be positive")
        if self.step <= 0.0:
            raise ValueError("step size must be positive")
        if self.stop_loss <= 0.0:
            raise ValueError("stop_loss must be positive")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        dirs = [np.asarray(v, dtype=float) for v in self.init_directions]
        object.__setattr__(self, "init_directions", dirs)


@dataclass
class Trajectory:
    steps: np.ndarray            # recorded step indices
    times: np.ndarray            # t = step * eta
    losses: np.ndarray
    betas: np.ndarray            # (records, d)
    residuals: np.ndarray        # (records, n)
    saturated: np.ndarray        # bool per record
    params: List[List[np.ndarray]]   # per record (empty if not recorded)
    status: str                  # converged | max_steps | aborted
    final_params: List[np.ndarray] = field(default_factory=list)

    @property
    def n_records(self) -> int:
        return len(self.steps)


def _forward_values(Ms, params):
    """f_i = M(x_i) o (v_1..v_L) for a stacked tensor Ms of shape (n, k...)."""
    T = Ms
    for k in range(len(params) - 1, -1, -1):
        T = np.tensordot(T, params[k], axes=(k + 1, 0))
    return T


def _contract_except(T, params, skip):
    """Contract every mode of T with its parameter vector except one."""
    out = T
    for k in range(len(params) - 1, -1, -1):
        if k == skip:
            continue
        out = np.tensordot(out, params[k], axes=(k, 0))
    return out


def _residuals_from_f(f, y, task):
    if task == "regression":
        return f - y, False
    margins = y * f
    with np.errstate(over="ignore"):
        r = -y * np.exp(-margins)
    saturated = bool(np.any(margins > _SATURATION_MARGIN))
    return r, saturated


def _loss_from_f(f, y, task):
    if task == "regression":
        with np.errstate(over="ignore"):
            return float(0.5 * np.sum((f - y) ** 2))
    with np.errstate(over="ignore"):
        return float(np.sum(np.exp(-y * f)))


def residual(net: TensorNetwork, dataset: Dataset) -> np.ndarray:
    """The per-example residual vector r."""
    Ms = np.stack([net.builder(x).array for x in dataset.X])
    f = _forward_values(Ms, net.params)
    r, _ = _residuals_from_f(f, dataset.y, dataset.task)
    return r


def loss(net: TensorNetwork, dataset: Dataset) -> float:
    Ms = np.stack([net.builder(x).array for x in dataset.X])
    f = _forward_values(Ms, net.params)
    return _loss_from_f(f, dataset.y, dataset.task)


def _velocities(Ms, params, r):
    """v_l' = M(-X^T r) o (v_1, ..., I, ..., v_L), via linearity of M."""
    T = -np.tensordot(r, Ms, axes=(0, 0))
    return [_contract_except(T, params, l) for l in range(len(params))]


def layer_gradients(net: TensorNetwork, dataset: Dataset) -> List[np.ndarray]:
    """Loss gradients per layer (the negated flow velocities)."""
    Ms = np.stack([net.builder(x).array for x in dataset.X])
    f = _forward_values(Ms, net.params)
    r, _ = _residuals_from_f(f, dataset.y, dataset.task)
    return [-v for v in _velocities(Ms, net.params, r)]


def _beta_probe(basis, params):
    """Contract the stacked basis tensors down to the coefficient vector."""
    T = basis
    for k in range(len(params) - 1, -1, -1):
        T = np.tensordot(T, params[k], axes=(k + 1, 0))
    return T


def run(net: TensorNetwork, dataset: Dataset, config: FlowConfig) -> Trajectory:
    """Integrate the flow; returns the recorded trajectory.

    Records step 0, every `record_every` steps, and the final step.  On
    NaN/Inf the run aborts with the last finite state preserved in the
    records.
    """
    if len(config.init_directions) != net.depth:
        raise ValueError("init_directions must have one entry per layer")
    d = dataset.d
    L = net.depth
    y = dataset.y
    task = dataset.task
    eta = config.step

    Ms = np.stack([net.builder(x).array for x in dataset.X])
    eye = np.eye(d)
    basis = np.stack([net.builder(eye[j]).array for j in range(d)])

    params = [config.alpha * v for v in config.init_directions]
    for l, v in enumerate(params):
        if v.shape[0] != net.param_shapes[l]:
            raise ValueError(f"layer {l + 1}: initialization has wrong length")

    fast2 = (L == 2)
    if fast2:
        MsT = np.ascontiguousarray(Ms.transpose(0, 2, 1))

    def f_of(p):
        if fast2:
            return (Ms @ p[1]) @ p[0]
        return _forward_values(Ms, p)

    def vel_of(p, r):
        if fast2:
            a = Ms @ p[1]          # (n, k1)
            b = MsT @ p[0]         # (n, k2)
            return [-(a.T @ r), -(b.T @ r)]
        return _velocities(Ms, p, r)

    rec_steps, rec_loss, rec_beta, rec_res, rec_sat, rec_params = [], [], [], [], [], []

    def record(step, lval, r, sat):
        rec_steps.append(step)
        rec_loss.append(lval)
        rec_beta.append(np.array(_beta_probe(basis, params)))
        rec_res.append(np.array(r))
        rec_sat.append(sat)
        if config.record_params:
            rec_params.append([v.copy() for v in params])

    status = "max_steps"
    step = 0
    while True:
        f = f_of(params)
        r, sat = _residuals_from_f(f, y, task)
        lval = _loss_from_f(f, y, task)
        finite = np.isfinite(lval) and all(np.all(np.isfinite(v)) for v in params)
        if not finite:
            status = "aborted"
            break
        if step % config.record_every == 0 or step == config.max_steps:
            record(step, lval, r, sat)
        if lval <= config.stop_loss:
            if rec_steps[-1] != step:
                record(step, lval, r, sat)
            status = "converged"
            break
        if step >= config.max_steps:
            if rec_steps[-1] != step:
                record(step, lval, r, sat)
            break

        if config.integrator == "euler":
            v = vel_of(params, r)
            for l in range(L):
                params[l] = params[l] + eta * v[l]
        else:  # rk4
            def k_of(p):
                fv = f_of(p)
                rv, _ = _residuals_from_f(fv, y, task)
                return vel_of(p, rv)
            k1 = k_of(params)
            k2 = k_of([params[l] + 0.5 * eta * k1[l] for l in range(L)])
            k3 = k_of([params[l] + 0.5 * eta * k2[l] for l in range(L)])
            k4 = k_of([params[l] + eta * k3[l] for l in range(L)])
            for l in range(L):
                params[l] = params[l] + (eta / 6.0) * (
                    k1[l] + 2.0 * k2[l] + 2.0 * k3[l] + k4[l])
        step += 1

    if not rec_steps:
        raise NumericError("flow aborted before any finite state was recorded")

    return Trajectory(
        steps=np.array(rec_steps, dtype=int),
        times=np.array(rec_steps, dtype=float) * eta,
        losses=np.array(rec_loss),
        betas=np.vstack(rec_beta),
        residuals=np.vstack(rec_res),
        saturated=np.array(rec_sat, dtype=bool),
        params=rec_params,
        status=status,
        final_params=[v.copy() for v in params],
    )


def balance_gap(net: TensorNetwork, decomp) -> np.ndarray:
    """(L-1) x m matrix of |[U_l^T v_l]_j|^2 - |[U_L^T v_L]_j|^2.

    Conserved along the flow for orthogonally decomposable networks.
    """
    L = net.depth
    if decomp.depth != L:
        raise ValueError("decomposition depth does not match the network")
    etas = []
    for l in range(L):
        U = decomp.U[l]
        if U.shape[0] != net.param_shapes[l]:
            raise ValueError(f"layer {l + 1}: U has wrong row count")
        etas.append(U.conj().T @ net.params[l])
    last = np.abs(etas[-1]) ** 2
    return np.vstack([np.abs(etas[l]) ** 2 - last for l in range(L - 1)])


@dataclass(frozen=True)
class FcBalance:
    matrices: List[np.ndarray]
    eig_min: np.ndarray
    eig_max: np.ndarray


def fc_balance(net: TensorNetwork) -> FcBalance:
    """Gram differences W_l^T W_l - W_{l+1} W_{l+1}^T (last layer as outer
    product), conserved along fully-connected flows."""
    if net.arch != "fully_connected":
        raise ValueError("fc_balance only applies to fully-connected networks")
    mats, w_last = fc_weight_matrices(net)
    L = net.depth
    diffs = []
    for l in range(L - 2):
        diffs.append(mats[l].T @ mats[l] - mats[l + 1] @ mats[l + 1].T)
    diffs.append(mats[-1].T @ mats[-1] - np.outer(w_last, w_last))
    eig_min = np.array([np.linalg.eigvalsh(D)[0] for D in diffs])
    eig_max = np.array([np.linalg.eigvalsh(D)[-1] for D in diffs])
    return FcBalance(matrices=diffs, eig_min=eig_min, eig_max=eig_max)


def alignment(net: TensorNetwork, dataset: Dataset) -> dict:
    """Cosines between each layer and its negative gradient, plus the global
    cosine; None marks an undefined value (zero vector or zero gradient)."""
    grads = layer_gradients(net, dataset)
    per_layer = []
    for v, g in zip(net.params, grads):
        nv = np.linalg.norm(v)
        ng = np.linalg.norm(g)
        if nv == 0.0 or ng == 0.0:
            per_layer.append(None)
        else:
            per_layer.append(float(-(v @ g) / (nv * ng)))
    theta = np.concatenate(net.params)
    grad = np.concatenate(grads)
    nt = np.linalg.norm(theta)
    ng = np.linalg.norm(grad)
    overall = None if nt == 0.0 or ng == 0.0 else float(-(theta @ grad) / (nt * ng))
    return {"per_layer": per_layer, "overall": overall}


def write_csv(traj: Trajectory, path) -> None:
    """Trajectory CSV: step,t,loss,beta_1..beta_d plus diagnostics, floats
    with 17 significant digits."""
    d = traj.betas.shape[1]
    header = ["step", "t", "loss"] + [f"beta_{j + 1}" for j in range(d)]
    header.append("diag_saturated")
    lines = [",".join(header)]
    for i in range(traj.n_records):
        row = [str(int(traj.steps[i])),
               format(traj.times[i], ".17g"),
               format(traj.losses[i], ".17g")]
        row += [format(v, ".17g") for v in traj.betas[i]]
        row.append(str(int(traj.saturated[i])))
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Parse a trajectory CSV back into arrays (inverse of write_csv)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        raise ValueError(f"trajectory file {path} has no data rows")
    cols = {name: data[:, i] for i, name in enumerate(header)}
    beta_names = [h for h in header if h.startswith("beta_")]
    betas = np.column_stack([cols[h] for h in beta_names])
    return {
        "step": cols["step"].astype(int),
        "t": cols["t"],
        "loss": cols["loss"],
        "beta": betas,
        "saturated": cols.get("diag_saturated"),
    }

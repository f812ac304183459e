"""Command-line surface: simulate, predict, compare, sweep.

Configs are JSON files validated against the shipped v1 schema; presets
are resolved by name from the package data.  Exit codes: 0 success,
1 config error, 2 numeric error, 3 I/O error, 4 comparison failure.
"""

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import decomp, flow, predictors
from .solvers import NumericError
from .tensors import (Dataset, convolutional_network, diagonal_network,
                      fully_connected_network)


class ConfigError(ValueError):
    pass


class CompareFailure(RuntimeError):
    pass


def _load_schema(name):
    ref = resources.files("linbias").joinpath("schemas", "v1", name)
    return json.loads(ref.read_text())


def _preset_path(name):
    base = name if name.endswith(".json") else name + ".json"
    ref = resources.files("linbias").joinpath("presets", base)
    return ref if ref.is_file() else None


def load_config(path_or_name):
    p = Path(path_or_name)
    if p.is_file():
        text = p.read_text()
    else:
        ref = _preset_path(str(path_or_name))
        if ref is None:
            raise ConfigError(
                f"config {path_or_name!r} is neither a file nor a known preset")
        text = ref.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    schema = _load_schema("experiment.schema.json")
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config failed schema validation: {exc.message}") from exc
    return cfg


def _arch_label(arch_cfg):
    return {"diagonal": "diag", "convolutional": "conv",
            "fully_connected": "fc"}[arch_cfg["type"]]


def _build_network(arch_cfg, d):
    kind = arch_cfg["type"]
    if kind == "diagonal":
        L = int(arch_cfg.get("depth", 2))
        return diagonal_network(d, L)
    if kind == "convolutional":
        sizes = arch_cfg["filter_sizes"]
        return convolutional_network(d, sizes)
    if kind == "fully_connected":
        widths = arch_cfg["widths"]
        if widths[0] != d:
            raise ConfigError("first width must equal the data dimension")
        return fully_connected_network(widths)
    raise ConfigError(f"unknown architecture {kind!r}")


def _init_directions(arch_cfg, net):
    scheme = arch_cfg.get("init", {}).get("scheme", "ones_last_zero")
    L = net.depth
    if scheme == "explicit":
        dirs = arch_cfg["init"].get("directions")
        if dirs is None or len(dirs) != L:
            raise ConfigError("explicit init needs one direction per layer")
        return [np.asarray(v, dtype=float) for v in dirs]
    if scheme == "ones_last_zero":
        return [np.ones(net.param_shapes[l]) for l in range(L - 1)] + \
               [np.zeros(net.param_shapes[L - 1])]
    if scheme == "delta_last_zero":
        dirs = []
        for l in range(L - 1):
            v = np.zeros(net.param_shapes[l])
            v[0] = 1.0
            dirs.append(v)
        dirs.append(np.zeros(net.param_shapes[L - 1]))
        return dirs
    if scheme == "identity_last_zero":
        if net.arch != "fully_connected":
            raise ConfigError("identity_last_zero applies to fully-connected nets")
        widths = net.dims["widths"]
        dirs = []
        for l in range(L - 1):
            if widths[l] != widths[l + 1]:
                raise ConfigError("identity init needs square layers")
            dirs.append(np.eye(widths[l]).reshape(-1, order="F"))
        dirs.append(np.zeros(net.param_shapes[L - 1]))
        return dirs
    raise ConfigError(f"unknown init scheme {scheme!r}")


def _dataset(cfg):
    ds = cfg["dataset"]
    return Dataset(X=np.asarray(ds["X"], dtype=float),
                   y=np.asarray(ds["y"], dtype=float), task=cfg["task"])


def _alpha_tag(alpha):
    return format(alpha, "g").replace(".", "p").replace("-", "m")


def _run_one(cfg, arch_cfg, dataset, alpha):
    fl = cfg["flow"]
    net = _build_network(arch_cfg, dataset.d)
    config = flow.FlowConfig(
        alpha=alpha,
        init_directions=_init_directions(arch_cfg, net),
        integrator=fl.get("integrator", "euler"),
        step=fl["step"],
        max_steps=int(fl["max_steps"]),
        stop_loss=fl.get("stop_loss", 1e-14),
        record_every=int(fl.get("record_every", 100)),
        record_params=bool(fl.get("record_params", True)),
    )
    traj = flow.run(net, dataset, config)
    return net, config, traj


def _traj_filename(name, arch_cfg, alpha):
    return f"{name}__{_arch_label(arch_cfg)}__alpha-{_alpha_tag(alpha)}.csv"


def cmd_simulate(cfg, outdir: Path):
    dataset = _dataset(cfg)
    alphas = cfg["flow"]["alphas"]
    if not alphas:
        raise ConfigError("alpha list must not be empty")
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for arch_cfg in cfg["archs"]:
        for alpha in alphas:
            if alpha <= 0:
                raise ConfigError("initial scale alpha must be positive")
            net, config, traj = _run_one(cfg, arch_cfg, dataset, alpha)
            csv_path = outdir / _traj_filename(cfg["name"], arch_cfg, alpha)
            flow.write_csv(traj, csv_path)
            final = {
                "name": cfg["name"],
                "arch": arch_cfg["type"],
                "alpha": alpha,
                "status": traj.status,
                "final_loss": float(traj.losses[-1]),
                "final_beta": [float(v) for v in traj.betas[-1]],
                "steps_run": int(traj.steps[-1]),
            }
            jpath = csv_path.with_name(csv_path.stem + "__final.json")
            jpath.write_text(json.dumps(final, indent=2, sort_keys=True) + "\n")
            written.append(str(csv_path))
    return written


def _predict_one(cfg, arch_cfg, dataset, alpha):
    """Select and run the applicable predictor for one (arch, alpha) pair."""
    kind = arch_cfg["type"]
    task = cfg["task"]
    X, y = dataset.X, dataset.y
    net = _build_network(arch_cfg, dataset.d)
    dirs = _init_directions(arch_cfg, net)
    L = net.depth

    if task == "regression":
        if kind == "fully_connected":
            beta = predictors.min_l2_interpolant(X, y)
            resid = float(np.linalg.norm(X @ beta - y))
            return predictors.Prediction(
                kind="point", value=beta, theorem="min-l2-interpolation",
                certificate={"constraint_residual": resid})
        if kind == "diagonal":
            eta = dirs[0]
            if np.any(eta == 0.0):
                raise ConfigError("diagonal regression prediction needs a "
                                  "strictly nonzero first-layer init")
            sol = predictors.q_minimizer(L, alpha, eta, np.eye(dataset.d), X, y)
            return sol.prediction()
        if kind == "convolutional":
            sizes = net.dims["filter_sizes"]
            if any(k != dataset.d for k in sizes):
                raise ConfigError("conv regression prediction needs full-length "
                                  "filters")
            for row in X:
                if not decomp.is_even(row):
                    raise ConfigError("conv regression prediction needs even data")
            if not decomp.is_even(dirs[0]):
                raise ConfigError("conv regression prediction needs an even init")
            F = decomp.dft_matrix(dataset.d)
            eta = (F @ dirs[0]).real
            if np.any(np.abs(eta) < 1e-12):
                raise ConfigError("initialization has vanishing transform "
                                  "coordinates; the weighting is singular")
            S = decomp.real_conv_transform(dataset.d, L)
            sol = predictors.q_minimizer(L, alpha, eta, S, X, y)
            return sol.prediction()
        raise ConfigError(f"no regression predictor for arch {kind!r}")

    # classification
    if kind == "fully_connected":
        return predictors.maxmargin_l2(X, y).prediction()
    if kind == "diagonal":
        rho = predictors.min_l1_margin(X, y)
        direction = rho / np.linalg.norm(rho)
        report = predictors.kkt_residual_maxmargin_2overL(
            rho, np.eye(dataset.d), X, y, L)
        return predictors.Prediction(
            kind="direction", value=direction, theorem="l1-margin-direction",
            certificate={
                "primal_violation": report.primal_violation,
                "stationarity_gap": report.stationarity_gap,
                "complementary_slackness": report.complementary_slackness,
            })
    if kind == "convolutional":
        sizes = net.dims["filter_sizes"]
        if sizes[0] < dataset.d:
            if dataset.n != 1 or L != 2:
                raise ConfigError("small-filter conv predictions need a single "
                                  "data point and depth 2")
            sol = predictors.conv_small_filter_direction(
                X[0], float(y[0]), sizes[0])
            return sol.prediction()
        S = decomp.real_conv_transform(dataset.d, L)
        rho = predictors.min_l1_margin(X @ S.T, y)
        beta = S.T @ rho
        direction = beta / np.linalg.norm(beta)
        report = predictors.kkt_residual_maxmargin_2overL(rho, S, X, y, L)
        return predictors.Prediction(
            kind="direction", value=direction, theorem="dft-l1-margin-direction",
            certificate={
                "primal_violation": report.primal_violation,
                "stationarity_gap": report.stationarity_gap,
                "complementary_slackness": report.complementary_slackness,
            })
    raise ConfigError(f"no classification predictor for arch {kind!r}")


def cmd_predict(cfg, outdir: Path):
    dataset = _dataset(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    schema = _load_schema("prediction.schema.json")
    for arch_cfg in cfg["archs"]:
        for alpha in cfg["flow"]["alphas"]:
            pred = _predict_one(cfg, arch_cfg, dataset, alpha)
            body = pred.to_json_dict()
            jsonschema.validate(body, schema)
            entries.append({"arch": arch_cfg["type"], "alpha": alpha, **body})
    out = {"name": cfg["name"], "predictions": entries}
    path = outdir / f"{cfg['name']}__predictions.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return path


def cmd_compare(cfg, outdir: Path):
    dataset = _dataset(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    pred_path = outdir / f"{cfg['name']}__predictions.json"
    if not pred_path.is_file():
        cmd_predict(cfg, outdir)
    preds = json.loads(pred_path.read_text())["predictions"]

    comp = cfg.get("compare", {})
    tol = comp.get("tolerance", 1e-2)
    cos_min = comp.get("cosine_min", 0.99)
    alpha_max = comp.get("alpha_max_enforced")
    hard_fail = comp.get("hard_fail", cfg["task"] == "regression")

    results = []
    any_fail = False
    for arch_cfg in cfg["archs"]:
        for alpha in cfg["flow"]["alphas"]:
            csv_path = outdir / _traj_filename(cfg["name"], arch_cfg, alpha)
            if not csv_path.is_file():
                cmd_simulate(cfg, outdir)
            data = flow.read_csv(csv_path)
            beta = data["beta"][-1]
            match = [p for p in preds
                     if p["arch"] == arch_cfg["type"] and p["alpha"] == alpha]
            if not match:
                raise ConfigError("no prediction found for "
                                  f"{arch_cfg['type']} at alpha={alpha}")
            value = np.asarray(match[0]["value"], dtype=float)
            if value.shape != beta.shape:
                raise ConfigError("prediction and trajectory dimensions differ")
            enforced = bool(hard_fail)
            if alpha_max is not None and arch_cfg["type"] == "fully_connected" \
                    and cfg["task"] == "regression" and alpha > alpha_max:
                enforced = False
            if match[0]["kind"] == "point":
                metric, val = "distance", float(np.linalg.norm(beta - value))
                ok = val <= tol
            else:
                nrm = np.linalg.norm(beta)
                val = float(beta @ value / nrm) if nrm > 0 else 0.0
                metric, ok = "cosine", val >= cos_min
            passed = bool(ok) if enforced else None
            if enforced and not ok:
                any_fail = True
            results.append({
                "arch": arch_cfg["type"], "alpha": alpha, "metric": metric,
                "value": val, "tolerance": tol if metric == "distance" else cos_min,
                "enforced": enforced, "passed": passed,
            })
    report = {"name": cfg["name"], "results": results, "passed": not any_fail}
    jsonschema.validate(report, _load_schema("report.schema.json"))
    path = outdir / f"{cfg['name']}__report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if any_fail:
        raise CompareFailure(f"comparison failed; see {path}")
    return path


def cmd_sweep(cfg, outdir: Path):
    """Run the alpha grid and record distance to the small-init predictor."""
    dataset = _dataset(cfg)
    if cfg["task"] != "regression":
        raise ConfigError("sweep is defined for regression configs")
    outdir.mkdir(parents=True, exist_ok=True)
    arch_cfg = cfg["archs"][0]
    kind = arch_cfg["type"]
    X, y = dataset.X, dataset.y
    if kind == "fully_connected":
        target = predictors.min_l2_interpolant(X, y)
    elif kind == "diagonal":
        target = predictors.min_l1_interpolant(np.eye(dataset.d), X, y)
    else:
        S = decomp.real_conv_transform(dataset.d, 2)
        target = S.T @ predictors.min_l1_interpolant(S, X, y)
    rows = []
    for alpha in cfg["flow"]["alphas"]:
        if alpha <= 0:
            raise ConfigError("initial scale alpha must be positive")
        _, _, traj = _run_one(cfg, arch_cfg, dataset, alpha)
        beta = traj.betas[-1]
        rows.append((alpha, beta, float(np.linalg.norm(beta - target))))
    d = dataset.d
    header = ["alpha"] + [f"beta_{j + 1}" for j in range(d)] + ["distance"]
    lines = [",".join(header)]
    for alpha, beta, dist in rows:
        vals = [format(alpha, ".17g")] + [format(v, ".17g") for v in beta] \
            + [format(dist, ".17g")]
        lines.append(",".join(vals))
    path = outdir / f"{cfg['name']}__sweep.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="linbias",
        description="Simulate gradient flow on linear tensor networks and "
                    "verify the predicted limit points/directions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "predict", "compare", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="path to a config JSON or the name of a preset")
        p.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        outdir = Path(args.out)
        if args.command == "simulate":
            cmd_simulate(cfg, outdir)
        elif args.command == "predict":
            cmd_predict(cfg, outdir)
        elif args.command == "compare":
            cmd_compare(cfg, outdir)
        else:
            cmd_sweep(cfg, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, jsonschema.ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except CompareFailure as exc:
        print(f"comparison failed: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

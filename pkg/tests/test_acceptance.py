"""End-to-end acceptance suite.

Each test exercises one headline guarantee at its stated tolerance, using
the shipped presets where one applies.  These are intentionally heavier
than the unit tests; the whole file runs in a few minutes.
"""

import time

import numpy as np
import pytest

from linbias import cli, decomp, flow, predictors, scalar_ode
from linbias.tensors import (Dataset, DataTensor, custom_network,
                             diagonal_network)


def _preset(name):
    return cli.load_config(name)


def test_figure1_regression_reproduction():
    t0 = time.monotonic()
    cfg = _preset("fig1-regression")
    ds = cli._dataset(cfg)
    targets = {
        "fully_connected": np.array([0.2, 0.4]),
        "diagonal": np.array([0.0, 0.5]),
        "convolutional": np.array([1.0 / 3.0, 1.0 / 3.0]),
    }
    for arch_cfg in cfg["archs"]:
        _, _, traj = cli._run_one(cfg, arch_cfg, ds, 0.01)
        beta = traj.betas[-1]
        dist = np.linalg.norm(beta - targets[arch_cfg["type"]])
        assert dist <= 1e-2, (arch_cfg["type"], dist)
    assert time.monotonic() - t0 < 10.0


def test_two_layer_closed_form_vs_simulation():
    t0 = time.monotonic()
    rng = np.random.default_rng(314)
    x0 = np.array([1.0, -0.5, 0.25])
    ds = Dataset(X=x0[None, :], y=np.array([1.3]), task="regression")
    for _ in range(5):
        m = int(rng.integers(2, 5))
        k1 = int(rng.integers(m, m + 2))
        k2 = int(rng.integers(m, m + 2))
        Q1, _ = np.linalg.qr(rng.standard_normal((k1, m)))
        Q2, _ = np.linalg.qr(rng.standard_normal((k2, m)))
        s = np.sort(rng.uniform(0.5, 1.5, m))[::-1]
        A = Q1 @ np.diag(s) @ Q2.T

        net = custom_network(
            3, lambda x, A=A: DataTensor(float(x @ x0) / float(x0 @ x0) * A),
            [np.zeros(k1), np.zeros(k2)])
        vbar1 = Q1 @ rng.uniform(1.0, 1.5, m) + 0.3 * rng.standard_normal(k1)
        vbar2 = Q2 @ rng.uniform(-0.3, 0.3, m)
        lim = predictors.two_layer_regression_limit(Q1, Q2, s, vbar1, vbar2,
                                                    1.0, 1.3)
        cfg = flow.FlowConfig(alpha=1.0, init_directions=[vbar1, vbar2],
                              integrator="rk4", step=1e-2, max_steps=10000,
                              stop_loss=1e-24, record_every=10000)
        traj = flow.run(net, ds, cfg)
        err = max(np.max(np.abs(traj.final_params[0] - lim.v1)),
                  np.max(np.abs(traj.final_params[1] - lim.v2)))
        assert err <= 1e-4, err
    assert time.monotonic() - t0 < 30.0


def test_depthwise_predictor_vs_flow():
    t0 = time.monotonic()
    X = np.array([[1.0, 0.3, -0.5, 0.8], [-0.4, 1.0, 0.6, -0.2]])
    y = np.array([1.0, -0.5])
    ds = Dataset(X=X, y=y, task="regression")
    for L in (2, 3):
        net = diagonal_network(4, L)
        dirs = [np.ones(4) for _ in range(L - 1)] + [np.zeros(4)]
        cfg = flow.FlowConfig(alpha=1.0, init_directions=dirs,
                              integrator="rk4", step=5e-3, max_steps=12000,
                              stop_loss=1e-26, record_every=12000)
        traj = flow.run(net, ds, cfg)
        sol = predictors.q_minimizer(L, 1.0, np.ones(4), np.eye(4), X, y)
        rel = np.linalg.norm(traj.betas[-1] - sol.beta) \
            / np.linalg.norm(sol.beta)
        assert rel <= 1e-3, (L, rel)
    assert time.monotonic() - t0 < 60.0


def test_q_interpolation_limits():
    X = np.array([[1.0, 0.0, 0.1, 0.05], [0.0, 1.0, 0.05, -0.1]])
    y = np.array([1.0, 1.0])
    sol = predictors.q_minimizer(2, 1e-3, np.ones(4), np.eye(4), X, y)
    oracle = predictors.min_l1_interpolant(np.eye(4), X, y)
    rel = np.linalg.norm(sol.beta - oracle) / np.linalg.norm(oracle)
    assert rel <= 1e-3, rel

    eta = np.array([1.0, 0.7, 1.3, 0.9])
    X2 = np.array([[1.0, 0.5, -0.3, 0.8], [0.2, -1.0, 0.4, 0.1]])
    y2 = np.array([1.0, -0.5])
    sol = predictors.q_minimizer(2, 1e3, eta, np.eye(4), X2, y2)
    W = np.diag(eta ** 2)
    closed = W @ X2.T @ np.linalg.solve(X2 @ W @ X2.T, y2)
    rel = np.linalg.norm(sol.beta - closed) / np.linalg.norm(closed)
    assert rel <= 1e-3, rel


def test_scalar_link_function_suite():
    for t in np.linspace(-5.0, 5.0, 101):
        assert abs(scalar_ode.h(2, t) - np.sinh(2.0 * t) / 2.0) <= 1e-9
    for L in (2, 3, 4):
        hint = scalar_ode.domain_hint(L)
        ts = np.linspace(0.01, min(2.5, 0.8 * hint), 30)
        vals = [scalar_ode.h(L, t) for t in ts]
        assert np.all(np.diff(vals) > 0.0)
        for t in ts:
            assert abs(scalar_ode.h(L, -t) + scalar_ode.h(L, t)) \
                <= 1e-9 * (1.0 + abs(scalar_ode.h(L, t)))
        for tau in (-20.0, -1.0, 0.3, 5.0, 300.0):
            t_inv = scalar_ode.h_inv(L, tau)
            assert abs(scalar_ode.h(L, t_inv) - tau) \
                <= 1e-9 * (1.0 + abs(tau))


def test_conservation_on_rk4_presets():
    cfg = _preset("conservation-rk4")
    ds = cli._dataset(cfg)
    d = ds.d
    for arch_cfg in cfg["archs"]:
        net, _, traj = cli._run_one(cfg, arch_cfg, ds,
                                    cfg["flow"]["alphas"][0])
        kind = arch_cfg["type"]
        if kind == "fully_connected":
            series = []
            for p in traj.params:
                fb = flow.fc_balance(net.with_params(p))
                series.append(np.concatenate([D.reshape(-1)
                                              for D in fb.matrices]))
        else:
            dec = (decomp.diag_decomposition(d, net.depth)
                   if kind == "diagonal"
                   else decomp.conv_decomposition(d, net.depth))
            series = [flow.balance_gap(net.with_params(p), dec).reshape(-1)
                      for p in traj.params]
        series = np.vstack(series)
        scale = 1.0 + np.max(np.abs(series[0]))
        drift = np.max(np.abs(series - series[0]))
        assert drift <= 1e-6 * scale, (kind, drift)


def test_gradient_oracle_finite_differences():
    rng = np.random.default_rng(2718)
    builders = [
        lambda: diagonal_network(3, 2),
        lambda: diagonal_network(2, 3),
        lambda: cli._build_network({"type": "convolutional",
                                    "filter_sizes": [3, 3]}, 3),
        lambda: cli._build_network({"type": "convolutional",
                                    "filter_sizes": [2, 2]}, 2),
        lambda: cli._build_network({"type": "fully_connected",
                                    "widths": [3, 2, 2]}, 3),
        lambda: cli._build_network({"type": "fully_connected",
                                    "widths": [2, 2]}, 2),
    ]
    checked = 0
    while checked < 100:
        net = builders[checked % len(builders)]()
        d = net.input_dim
        X = rng.standard_normal((2, d))
        task = ("regression", "classification")[checked % 2]
        y = (rng.standard_normal(2) if task == "regression"
             else np.array([1.0, -1.0]))
        try:
            ds = Dataset(X=X, y=y, task=task)
        except Exception:
            continue
        net = net.with_params([0.5 * rng.standard_normal(n)
                               for n in net.param_shapes])
        grads = flow.layer_gradients(net, ds)
        eps = 1e-6
        for l in range(net.depth):
            for j in range(net.param_shapes[l]):
                p_plus = [v.copy() for v in net.params]
                p_minus = [v.copy() for v in net.params]
                p_plus[l][j] += eps
                p_minus[l][j] -= eps
                fd = (flow.loss(net.with_params(p_plus), ds)
                      - flow.loss(net.with_params(p_minus), ds)) / (2 * eps)
                assert abs(grads[l][j] - fd) <= 1e-6 * (1.0 + abs(fd)), \
                    (net.arch, l, j)
        checked += 1


def test_singlepoint_classification_directions():
    t0 = time.monotonic()
    cases = {
        "singlepoint-diagonal": None,
        "singlepoint-conv-k1": None,
        "singlepoint-conv-k2": None,
    }
    for name in cases:
        cfg = _preset(name)
        ds = cli._dataset(cfg)
        arch_cfg = cfg["archs"][0]
        alpha = cfg["flow"]["alphas"][0]
        net, _, traj = cli._run_one(cfg, arch_cfg, ds, alpha)
        assert traj.losses[-1] <= 1e-10, name
        pred = cli._predict_one(cfg, arch_cfg, ds, alpha)
        beta = traj.betas[-1]
        cos = float(beta @ pred.value / np.linalg.norm(beta))
        assert cos >= 0.99, (name, cos)
        verdict = predictors.singular_direction_verdict(traj, ds, net)
        assert not verdict.undefined, name
        trend = verdict.residual_trend()
        assert len(trend) == 3
        assert trend[0] > trend[1] > trend[2], (name, trend)
    assert time.monotonic() - t0 < 120.0


def test_small_initialization_sweep():
    cfg = _preset("smallinit-sweep")
    ds = cli._dataset(cfg)
    target = predictors.min_l2_interpolant(ds.X, ds.y)
    assert np.allclose(target, [0.2, 0.4], atol=1e-12)
    dists = []
    for alpha in cfg["flow"]["alphas"]:
        _, _, traj = cli._run_one(cfg, cfg["archs"][0], ds, alpha)
        dists.append(float(np.linalg.norm(traj.betas[-1] - target)))
    assert all(a > b for a, b in zip(dists, dists[1:])), dists
    assert dists[-1] <= 1e-2, dists


def test_commuting_sensor_interpolation():
    A1 = np.diag([1.0, 0.1, 0.0])
    A2 = np.diag([0.05, 1.0, -0.1])
    y = np.array([1.0, 1.0])
    lim = predictors.matrix_sensing_limit([A1, A2], y, 1e-2, 2)
    assert np.max(lim.fit_errors) <= 1e-8
    # nuclear-norm oracle on the eigenvalue rows (sensors already diagonal)
    Xeig = np.vstack([np.diag(A1), np.diag(A2)])
    oracle_rho = predictors.min_l1_interpolant(np.eye(3), Xeig, y)
    M_oracle = np.diag(oracle_rho)
    assert np.max(np.abs(lim.M - M_oracle)) <= 1e-3, \
        np.max(np.abs(lim.M - M_oracle))


def test_multipoint_classification_trend():
    cfg = _preset("fig3-classification")
    ds = cli._dataset(cfg)
    S_conv = decomp.real_conv_transform(ds.d, 2)
    for arch_cfg in cfg["archs"]:
        _, _, traj = cli._run_one(cfg, arch_cfg, ds,
                                  cfg["flow"]["alphas"][0])
        assert traj.steps[-1] == 2 * 10 ** 6
        assert traj.losses[-1] <= 1e-5, (arch_cfg["type"], traj.losses[-1])
        R = traj.n_records
        resids = []
        for frac in (0.5, 0.75, 1.0):
            i = min(R - 1, max(0, int(np.ceil(frac * R)) - 1))
            beta = traj.betas[i]
            if arch_cfg["type"] == "convolutional":
                rho = np.linalg.solve(S_conv.T, beta)
                S = S_conv
            else:
                rho, S = beta, np.eye(ds.d)
            rep = predictors.kkt_residual_maxmargin_2overL(rho, S, ds.X,
                                                           ds.y, 2)
            resids.append(rep.max_residual())
        # non-increasing up to float noise in the dual fit
        assert resids[1] <= resids[0] + 1e-9, (arch_cfg["type"], resids)
        assert resids[2] <= resids[1] + 1e-9, (arch_cfg["type"], resids)

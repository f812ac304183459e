"""Figure assembly from trajectory CSVs and prediction JSON files.

The renderer is a pure function of its input files: matplotlib's SVG
hash salt is pinned, fonts are embedded as paths, and the date metadata
is stripped, so the same inputs always produce the same bytes.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("svg")

import matplotlib.pyplot as plt  # noqa: E402


class PlotSpecError(ValueError):
    """Raised when a plot spec or one of its referenced files is unusable."""


_ARCH_COLORS = {
    "fully_connected": "#1f77b4",
    "diagonal": "#d62728",
    "convolutional": "#2ca02c",
}
_FALLBACK_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

_RC = {
    "svg.hashsalt": "plotkit",
    "svg.fonttype": "path",
    "figure.dpi": 100,
    "font.size": 9,
}


@dataclass
class TrajectoryRef:
    csv: Path
    arch: str
    alpha: float


@dataclass
class PlotSpec:
    """Inputs for one figure.

    trajectories: CSV files with (arch, alpha) labels; one panel is drawn
    per distinct alpha.  predictions: prediction JSON files whose entries
    are matched to panels by alpha.  line: optional {"X": ..., "y": ...}
    describing the affine set of interpolating coefficient vectors.
    """

    trajectories: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    line: dict | None = None
    xlim: tuple | None = None
    ylim: tuple | None = None
    title: str = ""
    out: str | None = None
    format: str = "svg"


def load_spec(path):
    path = Path(path)
    if not path.is_file():
        raise PlotSpecError(f"plot spec {path} does not exist")
    try:
        body = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PlotSpecError(f"plot spec is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise PlotSpecError("plot spec must be a JSON object")

    base = path.parent
    trajs = []
    for entry in body.get("trajectories", []):
        csv = Path(entry["csv"])
        if not csv.is_absolute():
            csv = base / csv
        if not csv.is_file():
            raise PlotSpecError(f"trajectory file {csv} does not exist")
        trajs.append(TrajectoryRef(csv=csv, arch=str(entry.get("arch", "?")),
                                   alpha=float(entry["alpha"])))
    preds = []
    for entry in body.get("predictions", []):
        p = Path(entry)
        if not p.is_absolute():
            p = base / p
        if not p.is_file():
            raise PlotSpecError(f"prediction file {p} does not exist")
        preds.append(p)

    def _pair(key):
        v = body.get(key)
        if v is None:
            return None
        if len(v) != 2:
            raise PlotSpecError(f"{key} must be a pair [lo, hi]")
        return (float(v[0]), float(v[1]))

    return PlotSpec(trajectories=trajs, predictions=preds,
                    line=body.get("line"), xlim=_pair("xlim"),
                    ylim=_pair("ylim"), title=str(body.get("title", "")),
                    out=body.get("out"), format=str(body.get("format", "svg")))


def _read_beta_columns(csv_path):
    """Return the (T, 2) array of coefficient columns from a trajectory CSV."""
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
        rest = fh.read()
    if not rest.strip():
        raise PlotSpecError(f"trajectory file {csv_path} has no data rows")
    try:
        data = np.loadtxt(rest.splitlines(), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise PlotSpecError(
            f"trajectory file {csv_path} is not numeric CSV: {exc}") from exc
    beta_cols = [i for i, name in enumerate(header)
                 if name.startswith("beta_")]
    if len(beta_cols) != 2:
        raise PlotSpecError(
            f"trajectory file {csv_path} has {len(beta_cols)} coefficient "
            "columns; figures are drawn in 2-D coefficient space")
    return data[:, beta_cols]


def _load_predictions(paths):
    """Flatten prediction JSON files into (arch, alpha, kind, value) tuples."""
    out = []
    for p in paths:
        try:
            body = json.loads(Path(p).read_text())
        except json.JSONDecodeError as exc:
            raise PlotSpecError(
                f"prediction file {p} is not valid JSON: {exc}") from exc
        for entry in body.get("predictions", []):
            value = np.asarray(entry.get("value", []), dtype=float)
            out.append((str(entry.get("arch", "?")),
                        float(entry.get("alpha", np.nan)),
                        str(entry.get("kind", "point")), value))
    return out


def _color_for(arch, extra):
    if arch in _ARCH_COLORS:
        return _ARCH_COLORS[arch]
    if arch not in extra:
        extra[arch] = _FALLBACK_COLORS[len(extra) % len(_FALLBACK_COLORS)]
    return extra[arch]


def _draw_interpolation_set(ax, line, xlim, ylim):
    X = np.asarray(line["X"], dtype=float)
    y = np.asarray(line["y"], dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise PlotSpecError("interpolation set needs a 2-column data matrix")
    if X.shape[0] == 1:
        a, b = X[0]
        c = y[0]
        if abs(b) > abs(a):
            xs = np.linspace(xlim[0], xlim[1], 2)
            ax.plot(xs, (c - a * xs) / b, color="#e0c000", lw=2.0,
                    zorder=1, label="global minima")
        else:
            ys = np.linspace(ylim[0], ylim[1], 2)
            ax.plot((c - b * ys) / a, ys, color="#e0c000", lw=2.0,
                    zorder=1, label="global minima")
    else:
        z = np.linalg.lstsq(X, y, rcond=None)[0]
        ax.plot([z[0]], [z[1]], marker="*", ms=12, color="#e0c000",
                ls="none", zorder=1, label="global minimum")


def render_trajectories(spec: PlotSpec, out=None):
    """Render the figure described by spec and write it to out.

    Returns the output path.  One panel per distinct alpha; if the spec
    contains predictions but no trajectories, a single markers-only
    panel is drawn.
    """
    out = Path(out if out is not None else (spec.out or "figure.svg"))

    curves = []
    for ref in spec.trajectories:
        curves.append((ref, _read_beta_columns(ref.csv)))
    preds = _load_predictions(spec.predictions)
    for _, _, kind, value in preds:
        if kind == "point" and value.shape != (2,):
            raise PlotSpecError("predicted points must live in 2-D "
                                "coefficient space")

    alphas = sorted({ref.alpha for ref, _ in curves})
    if not alphas:
        if not preds:
            raise PlotSpecError("plot spec references no trajectories and "
                                "no predictions")
        alphas = sorted({a for _, a, _, _ in preds if np.isfinite(a)}) or [None]

    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(1, len(alphas),
                                 figsize=(4.0 * len(alphas), 3.6),
                                 squeeze=False)
        extra_colors = {}
        for ax, alpha in zip(axes[0], alphas):
            panel_curves = [(r, b) for r, b in curves if r.alpha == alpha]
            panel_preds = [p for p in preds
                           if alpha is None or p[1] == alpha]

            if spec.xlim is not None:
                xlim = spec.xlim
            else:
                pts = [b for _, b in panel_curves]
                pts += [v.reshape(1, 2) for _, _, k, v in panel_preds
                        if k == "point" and v.shape == (2,)]
                allp = np.vstack(pts) if pts else np.zeros((1, 2))
                pad = 0.1 * max(1e-3, np.ptp(allp[:, 0]))
                xlim = (allp[:, 0].min() - pad, allp[:, 0].max() + pad)
            if spec.ylim is not None:
                ylim = spec.ylim
            else:
                pts = [b for _, b in panel_curves]
                pts += [v.reshape(1, 2) for _, _, k, v in panel_preds
                        if k == "point" and v.shape == (2,)]
                allp = np.vstack(pts) if pts else np.zeros((1, 2))
                pad = 0.1 * max(1e-3, np.ptp(allp[:, 1]))
                ylim = (allp[:, 1].min() - pad, allp[:, 1].max() + pad)

            if spec.line is not None:
                _draw_interpolation_set(ax, spec.line, xlim, ylim)

            for ref, beta in panel_curves:
                color = _color_for(ref.arch, extra_colors)
                b = np.clip(beta, [xlim[0], ylim[0]], [xlim[1], ylim[1]])
                ax.plot(b[:, 0], b[:, 1], color=color, lw=1.2,
                        zorder=2, label=ref.arch)
                ax.plot([b[0, 0]], [b[0, 1]], marker=".", ms=5,
                        color=color, ls="none", zorder=2)

            for arch, _, kind, value in panel_preds:
                color = _color_for(arch, extra_colors)
                if kind == "point" and value.shape == (2,):
                    ax.plot([value[0]], [value[1]], marker="o", ms=7,
                            mfc="none", mec=color, mew=1.5, ls="none",
                            zorder=3)
                elif kind == "direction" and value.shape == (2,):
                    scale = 2.0 * max(abs(xlim[0]), abs(xlim[1]),
                                      abs(ylim[0]), abs(ylim[1]))
                    ax.plot([0.0, scale * value[0]], [0.0, scale * value[1]],
                            color=color, lw=1.0, ls="--", zorder=3)

            ax.set_xlim(*xlim)
            ax.set_ylim(*ylim)
            ax.set_xlabel("coefficient 1")
            if alpha is not None:
                ax.set_title(f"alpha = {alpha:g}")
        axes[0][0].set_ylabel("coefficient 2")

        handles, labels = axes[0][0].get_legend_handles_labels()
        seen = {}
        for h, lab in zip(handles, labels):
            seen.setdefault(lab, h)
        if seen:
            axes[0][0].legend(seen.values(), seen.keys(), loc="best",
                              fontsize=8)
        if spec.title:
            fig.suptitle(spec.title)
        fig.tight_layout()
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format=spec.format, metadata={"Date": None})
        plt.close(fig)
    return out

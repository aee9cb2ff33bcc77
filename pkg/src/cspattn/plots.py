"""Optional PNG figures rendered from report rows (Agg backend, no display)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render"]


def _by(rows, columns, key):
    i = columns.index(key)
    groups = {}
    for row in rows:
        groups.setdefault(row[i], []).append(row)
    return groups


def _col(rows, columns, name):
    i = columns.index(name)
    return np.array([float(r[i]) for r in rows])


def _floor(values):
    # exact zeros (complete collapse) are drawn at 1e-20 of the largest value
    top = np.nanmax(values) if np.any(values > 0) else 1.0
    return np.maximum(values, 1e-20 * top)


def _rank_decay(ax, columns, rows):
    for method, part in _by(rows, columns, "method").items():
        layer = _col(part, columns, "layer")
        ax.semilogy(layer, _floor(_col(part, columns, "residual_norm1inf")), "o-", label=method)
        if method == "csp":
            ax.semilogy(layer, _col(part, columns, "bound"), "k--", lw=0.8, label="csp bound")
    ax.set_xlabel("layer")
    ax.set_ylabel("residual (1,inf)-norm")


def _spectra(ax, columns, rows):
    for (method, layer), part in _by_pair(rows, columns, "method", "layer").items():
        s = _col(part, columns, "sigma")
        ax.semilogy(np.arange(1, len(s) + 1), _floor(s / s[0]), ls="-" if method == "csp" else ":",
                    label=f"{method} L{layer}")
    ax.set_xlabel("index")
    ax.set_ylabel("sigma_i / sigma_1")


def _by_pair(rows, columns, a, b):
    ia, ib = columns.index(a), columns.index(b)
    groups = {}
    for row in rows:
        groups.setdefault((row[ia], row[ib]), []).append(row)
    return groups


def _sinkhorn(ax, columns, rows):
    for k, part in _by(rows, columns, "groups").items():
        ax.loglog(_col(part, columns, "tau"), _floor(_col(part, columns, "distance")), "o-", label=f"K={k}")
    ax.invert_xaxis()
    ax.set_xlabel("tau")
    ax.set_ylabel("max |T S - P|")


def _bench(ax, columns, rows):
    for method, part in _by(rows, columns, "method").items():
        ax.loglog(_col(part, columns, "n"), _col(part, columns, "median_seconds"), "o-", label=method)
    ax.set_xlabel("N")
    ax.set_ylabel("median seconds")


def _train(ax, columns, rows):
    for kind, part in _by(rows, columns, "model_kind").items():
        ax.plot(_col(part, columns, "step"), _col(part, columns, "accuracy"), "o-", label=kind)
    ax.set_xlabel("step")
    ax.set_ylabel("accuracy")


def _ot(ax, columns, rows):
    part = [r for r in rows if r[columns.index("group_size")] != "all"]
    g = _col(part, columns, "group_size")
    ax.bar(g - 0.2, _col(part, columns, "trials"), 0.4, label="trials")
    ax.bar(g + 0.2, _col(part, columns, "agreements"), 0.4, label="agreements")
    ax.set_xlabel("group size")


def _demo(ax, columns, rows):
    maps = [np.array(r[columns.index("total_map")].split(), dtype=int) for r in rows]
    n = len(maps[0])
    img = np.zeros((n, n * len(maps)))
    for c, m in enumerate(maps):
        img[np.arange(n), c * n + m] = 1.0
    ax.imshow(img, cmap="Greys", interpolation="nearest")
    ax.set_xlabel("channel blocks")


DRAW = {
    "rank-decay": _rank_decay,
    "spectra": _spectra,
    "sinkhorn-converge": _sinkhorn,
    "bench": _bench,
    "train": _train,
    "ot-check": _ot,
    "demo": _demo,
}


def render(command, columns, rows, path):
    """Draw the figure for ``command`` and save it to ``path``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        DRAW[command](ax, list(columns), rows)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=7)
        ax.set_title(command)
        fig.tight_layout()
        fig.savefig(path, dpi=100)
    finally:
        plt.close(fig)

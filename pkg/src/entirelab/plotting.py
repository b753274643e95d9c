"""Figures for the ``report`` subcommand, rendered next to the files they show."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import read_csv, read_manifest, read_snapshots  # noqa: E402

__all__ = ["plot_profile", "plot_series", "plot_snapshots", "render_run"]


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_profile(csv_path, out=None) -> Path:
    """phi(xi) from a profile table, with 1 - phi on a log axis alongside."""
    header, cols = read_csv(csv_path)
    xi, phi = cols["xi"], cols["phi"]
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(9, 3.5))
    a0.plot(xi, phi)
    a0.set_xlabel("xi")
    a0.set_ylabel("phi")
    a0.set_title(f"front, c = {float(header.get('c', 'nan')):.6g}")
    with np.errstate(divide="ignore"):
        a1.semilogy(xi, np.abs(phi), label="phi")
        a1.semilogy(xi, np.abs(1 - phi), label="1 - phi")
    a1.set_xlabel("xi")
    a1.legend()
    return _save(fig, out or Path(csv_path).with_suffix(".png"))


def plot_series(csv_path, out=None, x_name: str = "t") -> Path:
    """Every numeric column against ``x_name``; log scale when all values are positive."""
    header, cols = read_csv(csv_path)
    if x_name not in cols:
        raise KeyError(f"{csv_path}: no column {x_name!r}")
    t = cols[x_name]
    fig, ax = plt.subplots(figsize=(6, 3.8))
    positive = True
    for name, vals in cols.items():
        if name == x_name or not isinstance(vals, np.ndarray):
            continue
        ax.plot(t, vals, label=name)
        positive = positive and bool(np.all(vals > 0))
    if positive:
        ax.set_yscale("log")
    ax.set_xlabel(x_name)
    ax.legend()
    ax.set_title(Path(csv_path).stem)
    return _save(fig, out or Path(csv_path).with_suffix(".png"))


def plot_snapshots(bin_path, out=None, count: int = 8) -> Path:
    """u(x, t) at ``count`` evenly spaced stored times, plus a space-time image."""
    recs = read_snapshots(bin_path)
    if not recs:
        raise ValueError(f"{bin_path}: no snapshots")
    times = np.array([r[0] for r in recs])
    _, x0, dx, u0 = recs[0]
    x = x0 + dx * np.arange(u0.size)
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(10, 3.8))
    for k in np.unique(np.linspace(0, len(recs) - 1, count).astype(int)):
        a0.plot(x, recs[k][3], label=f"t={times[k]:.3g}")
    a0.set_xlabel("x")
    a0.set_ylabel("u")
    a0.legend(fontsize=7)
    field = np.array([r[3] for r in recs])
    im = a1.imshow(field, aspect="auto", origin="lower", vmin=0.0, vmax=1.0,
                   extent=(x[0], x[-1], times[0], times[-1]), cmap="viridis")
    a1.set_xlabel("x")
    a1.set_ylabel("t")
    fig.colorbar(im, ax=a1)
    return _save(fig, out or Path(bin_path).with_suffix(".png"))


def render_run(directory) -> list:
    """Render every table and snapshot file found in a run directory."""
    d = Path(directory)
    made = []
    for path in sorted(d.glob("*.csv")):
        header, cols = read_csv(path)
        if "xi" in cols and "phi" in cols:
            made.append(plot_profile(path))
        elif "t" in cols:
            made.append(plot_series(path))
    bins = sorted(d.glob("*.bin"))
    manifest = d / "manifest.txt"
    if bins and manifest.exists():
        # entire-solution directories: the largest member carries the deliverable
        man = read_manifest(manifest)
        members = {float(k.split(".n", 1)[1]): v for k, v in man.items()
                   if k.startswith("files.n")}
        if members:
            bins = [d / members[max(members)]]
    for path in bins:
        made.append(plot_snapshots(path))
    return made

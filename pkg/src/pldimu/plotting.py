"""Matplotlib figures written next to the CSV artifacts (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _db(x):
    return 20 * np.log10(np.maximum(np.abs(x), 1e-300))


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_plant_bode(path, omega, nominal, lower, upper) -> Path:
    """Magnitude of each ``G_ij`` at the nominal point with the vertex spread.

    ``nominal``, ``lower``, ``upper`` have shape ``(freqs, ny, nu)``.
    """
    ny, nu = nominal.shape[1:]
    fig, axes = plt.subplots(ny, nu, figsize=(4 * nu, 3 * ny), squeeze=False, sharex=True)
    for i in range(ny):
        for j in range(nu):
            ax = axes[i, j]
            ax.fill_between(omega, _db(lower[:, i, j]), _db(upper[:, i, j]), color="0.8",
                            label="vertices")
            ax.semilogx(omega, _db(nominal[:, i, j]), "C0", label="nominal")
            ax.set_title(f"G{i + 1}{j + 1}")
            ax.set_ylabel("dB")
            ax.grid(True, which="both", alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("rad/s")
    axes[0, 0].legend(fontsize=8)
    return _save(fig, path)


def plot_envelopes(path, report) -> Path:
    """Sampled ``|S_ii|``, ``|T_ii|`` curves (nominal highlighted) under their templates."""
    w = report.grid.points
    n = report.s_template.shape[1]
    fig, axes = plt.subplots(2, n, figsize=(4.5 * n, 6), squeeze=False, sharex=True)
    for row, (curves, tmpl, name) in enumerate(((report.s_curves, report.s_template, "S"),
                                                (report.t_curves, report.t_template, "T"))):
        for c in range(n):
            ax = axes[row, c]
            for k in range(1, curves.shape[0]):
                ax.semilogx(w, _db(curves[k, :, c, c]), color="0.6", lw=0.7)
            ax.semilogx(w, _db(curves[0, :, c, c]), "C0", lw=1.5, label="nominal")
            ax.semilogx(w, _db(tmpl[:, c]), "r", lw=1.5, label="template")
            ax.set_title(f"|{name}{c + 1}{c + 1}|")
            ax.set_ylabel("dB")
            ax.grid(True, which="both", alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("rad/s")
    axes[0, 0].legend(fontsize=8)
    return _save(fig, path)


def plot_mu(path, curve, label="upper bound") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    w = curve.grid.points
    if curve.stable:
        ax.semilogx(w, curve.upper, "C0", label=label)
    ax.axhline(1.0, color="r", ls="--", lw=1)
    ax.set_xlabel("rad/s")
    ax.set_ylabel("mu")
    ax.set_title("structured singular value" if curve.stable else "closed loop unstable")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_controllers(path, omega, responses: dict) -> Path:
    """Entry magnitudes of one or more controllers (``name -> (freqs, ny, nu)``)."""
    first = next(iter(responses.values()))
    ny, nu = first.shape[1:]
    fig, axes = plt.subplots(ny, nu, figsize=(4 * nu, 3 * ny), squeeze=False, sharex=True)
    for k, (name, resp) in enumerate(responses.items()):
        for i in range(ny):
            for j in range(nu):
                axes[i, j].semilogx(omega, _db(resp[:, i, j]), f"C{k}", label=name)
    for i in range(ny):
        for j in range(nu):
            axes[i, j].set_title(f"K{i + 1}{j + 1}")
            axes[i, j].grid(True, which="both", alpha=0.3)
    axes[0, 0].legend(fontsize=8)
    return _save(fig, path)


def plot_trace(path, trace) -> Path:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    m = trace.y.shape[1]
    for i in range(m):
        ax1.plot(trace.t, trace.y[:, i], f"C{i}", label=f"q{i + 1}")
        ax1.plot(trace.t, trace.r[:, i], f"C{i}--", lw=0.8)
        ax2.plot(trace.t, trace.u[:, i], f"C{i}", label=f"u{i + 1}")
    ax1.set_ylabel("rad")
    ax2.set_ylabel("N m")
    ax2.set_xlabel("s")
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    return _save(fig, path)

"""Emits plot_results.py, a standalone matplotlib script over a run's CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

PLOT_SCRIPT = "plot_results.py"

_TEMPLATE = '''"""Plots for this run directory. Usage: python plot_results.py"""

from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent


def _load(name):
    path = HERE / name
    if not path.exists():
        return None
    return np.genfromtxt(path, delimiter=",", names=True)


def main():
    series = _load("timeseries.csv")
    if series is not None:
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        axes[0].semilogy(series["t"], series["sup_dist_u_to_1"] + 1e-300, label="sup|u-1|")
        axes[0].semilogy(series["t"], series["sup_dist_v_to_1"] + 1e-300, label="sup|v-1|")
        axes[0].set_xlabel("t")
        axes[0].legend()
        axes[1].plot(series["t"], series["mass"], label="mass")
        axes[1].plot(series["t"], series["a_t"], label="a(t)")
        axes[1].set_xlabel("t")
        axes[1].legend()
        fig.tight_layout()
        fig.savefig(HERE / "timeseries.png", dpi=120)

    for name in {envelopes!r}:
        env = _load(name)
        if env is None:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(env["t"], env["u_lo"], label="u_lo")
        ax.plot(env["t"], env["u_hi"], label="u_hi")
        if series is not None:
            ax.plot(series["t"], series["min_u"], "--", label="min u")
            ax.plot(series["t"], series["max_u"], "--", label="max u")
        ax.set_xlabel("t")
        ax.legend()
        fig.tight_layout()
        fig.savefig(HERE / (Path(name).stem + ".png"), dpi=120)


if __name__ == "__main__":
    main()
'''


def render_plot_script(envelope_files: Sequence[str] = ()) -> str:
    return _TEMPLATE.replace("{envelopes!r}", repr(tuple(envelope_files)))


def write_plot_script(out_dir: Path, envelope_files: Sequence[str] = ()) -> Path:
    path = Path(out_dir) / PLOT_SCRIPT
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_plot_script(envelope_files), encoding="utf-8")
    return path

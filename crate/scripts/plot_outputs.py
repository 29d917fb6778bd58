#!/usr/bin/env python3
"""Plots from a finished run: AUC histogram, response surface, diffusion profile.

    python3 scripts/plot_outputs.py fixtures/synthetic50/out plots/
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def auc_hist(out, dst):
    df = pd.read_csv(out / "report/auc_hist.csv")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(df.iloc[:, 0], df.iloc[:, -1], width=df.iloc[1, 0] - df.iloc[0, 0] if len(df) > 1 else 0.05, align="edge")
    ax.set_xlabel("tile AUC")
    ax.set_ylabel("tiles")
    fig.tight_layout()
    fig.savefig(dst / "auc_hist.png", dpi=150)


def surface(out, dst):
    df = pd.read_csv(out / "perturb/surface.csv")
    classes = df["class"].unique()
    fig, axes = plt.subplots(1, len(classes), figsize=(4.5 * len(classes), 3.8), squeeze=False)
    for ax, c in zip(axes[0], classes):
        g = df[df["class"] == c].pivot(index="delta_u", columns="delta_v", values="mean_response")
        im = ax.imshow(g.values, origin="lower", cmap="RdBu_r", aspect="auto")
        ax.set_xticks(range(len(g.columns)), [f"{x:g}" for x in g.columns])
        ax.set_yticks(range(len(g.index)), [f"{x:g}" for x in g.index])
        ax.set_xlabel("delta_v")
        ax.set_ylabel("delta_u")
        ax.set_title(c)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(dst / "surface.png", dpi=150)


def diffusion(out, dst):
    df = pd.read_csv(out / "diffusion/diffusion.csv")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for c, g in df.groupby("class"):
        ax.plot(g["delay"], g["rate"], marker=".", label=c)
    ax.set_xlabel("delay (days)")
    ax.set_ylabel("diffusion rate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(dst / "diffusion.png", dpi=150)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("dst")
    a = ap.parse_args()
    out, dst = Path(a.out), Path(a.dst)
    dst.mkdir(parents=True, exist_ok=True)
    for f in (auc_hist, surface, diffusion):
        f(out, dst)


if __name__ == "__main__":
    main()

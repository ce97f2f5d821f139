#!/usr/bin/env python3
"""Plots CSV output of `chainq sweep` and `chainq region`.

    python3 docs/plot_csv.py out/sweep.csv sweep.png
    python3 docs/plot_csv.py out/region.csv region.png
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def plot_sweep(df, ax):
    axis = df["axis"].iloc[0]
    for col in ("throughput", "drop_rate"):
        ax.plot(df["value"], df[col], marker="o", label=col)
    ax.set_xlabel(axis)
    twin = ax.twinx()
    twin.plot(df["value"], df["delay"], color="black", linestyle="--", label="delay")
    twin.set_ylabel("delay (slots)")
    best = df[df["optimal"] == True]  # noqa: E712
    for v in best["value"]:
        ax.axvline(v, color="grey", linewidth=0.8)
    ax.legend(loc="upper left")


def plot_region(df, ax):
    df = df[df["error"].isna()]
    sc = ax.scatter(df["throughput"], df["delay"], c=df["drop_rate"], cmap="viridis")
    ax.set_xlabel("throughput (tasks/slot)")
    ax.set_ylabel("delay (slots)")
    plt.colorbar(sc, ax=ax, label="drop rate")


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    df = pd.read_csv(sys.argv[1])
    fig, ax = plt.subplots(figsize=(6, 4))
    if "axis" in df.columns:
        plot_sweep(df, ax)
    elif "mu" in df.columns and "m" in df.columns:
        plot_region(df, ax)
    else:
        sys.exit("unrecognised CSV: expected sweep.csv or region.csv")
    fig.tight_layout()
    fig.savefig(sys.argv[2], dpi=150)


if __name__ == "__main__":
    main()

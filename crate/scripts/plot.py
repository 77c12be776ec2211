#!/usr/bin/env python3
"""Render the solver's CSV outputs with matplotlib.

Usage:
    plot.py trajectory out/simulate/trajectory.csv
    plot.py sweep      out/example1_sweep/sweep.csv
    plot.py contour    out/example3_gne/contour.csv

Each command writes a PNG next to the input file. The CSV files start with a
`# config=<hash>` provenance line, which is skipped.
"""

import argparse
import csv
import math
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_rows(path):
    with open(path, newline="") as handle:
        rows = [r for r in csv.reader(handle) if r and not r[0].startswith("#")]
    header, data = rows[0], rows[1:]
    return header, data


def plot_trajectory(path, out):
    header, data = read_rows(path)
    t = [float(r[0]) for r in data]
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    for idx, name in enumerate(header):
        if name.startswith(("S_", "I_")):
            series = [float(r[idx]) for r in data]
            axis = top if name.startswith("S_") else bottom
            axis.plot(t, series, label=name)
    top.set_ylabel("susceptible")
    bottom.set_ylabel("infected")
    bottom.set_xlabel("time")
    for axis in (top, bottom):
        axis.legend(fontsize=7)
    fig.savefig(out, dpi=150, bbox_inches="tight")


def plot_sweep(path, out):
    header, data = read_rows(path)
    fig, axis = plt.subplots(figsize=(7, 5))
    if header[0] == "G1":
        ok = [r for r in data if r[2] == "ok"]
        axis.scatter(
            [float(r[0]) for r in ok],
            [float(r[4]) for r in ok],
            s=12,
            c=["tab:blue" if r[3] == "pure" else "tab:red" for r in ok],
        )
        axis.set_xlabel("G1")
        axis.set_ylabel("tilde_u1")
    else:
        ok = [r for r in data if r[1] == "ok"]
        c = [float(r[0]) for r in ok]
        for column, label in [(3, "J1 min"), (4, "J1 max"), (5, "J2 min"), (6, "J2 max")]:
            axis.plot(c, [float(r[column]) for r in ok], marker="o", label=label)
        axis.set_xlabel("variance bound")
        axis.set_ylabel("cost")
        axis.legend()
    fig.savefig(out, dpi=150, bbox_inches="tight")


def plot_contour(path, out):
    _, data = read_rows(path)
    u1 = sorted({float(r[0]) for r in data})
    u2 = sorted({float(r[1]) for r in data})
    grid = [[math.nan] * len(u2) for _ in u1]
    index1 = {v: i for i, v in enumerate(u1)}
    index2 = {v: i for i, v in enumerate(u2)}
    for r in data:
        grid[index1[float(r[0])]][index2[float(r[1])]] = float(r[2])
    fig, axis = plt.subplots(figsize=(6, 5))
    contours = axis.contour(u2, u1, grid, levels=12)
    axis.clabel(contours, fontsize=7)
    axis.set_xlabel("u2")
    axis.set_ylabel("u1")
    axis.set_title("cost variance over action pairs")
    fig.savefig(out, dpi=150, bbox_inches="tight")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("kind", choices=["trajectory", "sweep", "contour"])
    parser.add_argument("csv", type=pathlib.Path)
    args = parser.parse_args()
    out = args.csv.with_suffix(".png")
    {"trajectory": plot_trajectory, "sweep": plot_sweep, "contour": plot_contour}[args.kind](
        args.csv, out
    )
    print(out)


if __name__ == "__main__":
    sys.exit(main())

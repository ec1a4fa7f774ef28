"""Render benchmark CSVs into figures.

Reads the CSV files written by mlmc-bench (comment lines starting with '#'
are skipped) and produces one figure per invocation:

  variance      V_l / h_l against h_l, log-log, one line per (scheme, M)
  cost          eps^2 * K against eps, log-log, one line per (scheme, M)
  work-profile  per-level fraction of total steps, grouped bars per scheme

The input files are never modified and no randomness is involved, so the
output is a pure function of the inputs.
"""

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


class SchemaError(ValueError):
    """A required CSV column is absent."""


class EmptyInputError(ValueError):
    """The CSV input contains no data rows."""


REQUIRED_COLUMNS = {
    "variance": ("scheme", "M", "level", "h_l", "V_l_over_h_l"),
    "cost": ("scheme", "M", "eps", "K", "eps2K"),
    "work-profile": ("scheme", "level", "fraction_of_total_steps"),
}

KINDS = tuple(REQUIRED_COLUMNS)


def load_rows(paths):
    """Read and concatenate data rows from one or more benchmark CSVs."""
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        rows.extend(csv.DictReader(lines))
    if not rows:
        raise EmptyInputError(
            "no data rows found in: " + ", ".join(str(p) for p in paths))
    return rows


def check_schema(rows, kind):
    present = rows[0].keys()
    for col in REQUIRED_COLUMNS[kind]:
        if col not in present:
            raise SchemaError(
                f"missing column '{col}' required for kind '{kind}'")


def _groups(rows, keys):
    """Rows bucketed by the tuple of the given columns, insertion-ordered."""
    out = {}
    for row in rows:
        out.setdefault(tuple(row[k] for k in keys), []).append(row)
    return out


def _line_plot(ax, rows, xcol, ycol, xlabel, ylabel):
    for (scheme, m), grp in _groups(rows, ("scheme", "M")).items():
        pts = sorted(((float(r[xcol]), float(r[ycol])) for r in grp))
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        ax.plot(xs, ys, marker="o", label=f"{scheme} (M={m})")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)


def _check_cost_monotone(rows):
    """Cost must grow as the tolerance shrinks; warn on any inversion."""
    for (scheme, m), grp in _groups(rows, ("scheme", "M")).items():
        pts = sorted(((float(r["eps"]), float(r["K"])) for r in grp),
                     reverse=True)
        for (e1, k1), (e2, k2) in zip(pts, pts[1:]):
            if k2 < k1:
                print(f"warning: cost not monotone for {scheme} (M={m}): "
                      f"K({e2:g})={k2:g} < K({e1:g})={k1:g}",
                      file=sys.stderr)


def build_figure(rows, kind, title=None):
    """Return a matplotlib Figure for the given kind of data."""
    check_schema(rows, kind)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    if kind == "variance":
        _line_plot(ax, rows, "h_l", "V_l_over_h_l",
                   "time step h_l", "V_l / h_l")
    elif kind == "cost":
        _check_cost_monotone(rows)
        _line_plot(ax, rows, "eps", "eps2K",
                   "error tolerance eps", "eps^2 K")
    else:
        groups = _groups(rows, ("scheme",))
        levels = sorted({int(r["level"]) for r in rows})
        width = 0.8 / max(len(groups), 1)
        for i, ((scheme,), grp) in enumerate(groups.items()):
            frac = {int(r["level"]): float(r["fraction_of_total_steps"])
                    for r in grp}
            xs = [lv + i * width for lv in levels]
            ax.bar(xs, [frac.get(lv, 0.0) for lv in levels], width=width,
                   label=scheme)
        ax.set_xticks([lv + 0.4 - width / 2 for lv in levels],
                      [str(lv) for lv in levels])
        ax.set_xlabel("level")
        ax.set_ylabel("fraction of total steps")
        ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mlmc-plot", description="Render mlmc-bench CSVs as figures.")
    parser.add_argument("--csv", action="append", required=True,
                        metavar="FILE", help="input CSV (repeatable)")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, metavar="IMAGE")
    parser.add_argument("--title", default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1
    try:
        rows = load_rows(args.csv)
        fig = build_figure(rows, args.kind, title=args.title)
    except (OSError, SchemaError, EmptyInputError) as exc:
        print(f"mlmc-plot: {exc}", file=sys.stderr)
        return 1
    fig.savefig(args.out)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())

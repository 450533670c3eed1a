"""Delimited outputs, aligned text tables and companion figures.

Every CLI report path writes machine-readable CSV plus, when figures are
enabled, matplotlib renderings of the same data next to it (time series of
the conserved functionals, divergence on a log axis, log-log EOC plots
with a first-order reference slope).
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .diagnostics import CSV_COLUMNS  # noqa: E402


def eoc_to_csv(table, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "h", "dt"] + list(table.errors)
                        + [f"rate_{k}" for k in table.errors])
        for i, n in enumerate(table.ns):
            row = [n, f"{table.hs[i]:.17g}",
                   "" if table.dts[i] is None else f"{table.dts[i]:.17g}"]
            row += [f"{table.errors[k][i]:.17g}" for k in table.errors]
            row += ["" if i == 0 else f"{table.rates[k][i - 1]:.17g}"
                    for k in table.errors]
            writer.writerow(row)


def eoc_to_text(table) -> str:
    names = list(table.errors)
    head = f"{'n':>4} {'h':>10}" + "".join(f" {k:>14} {'rate':>6}"
                                           for k in names)
    lines = [table.label, head, "-" * len(head)]
    for i, n in enumerate(table.ns):
        row = f"{n:>4} {table.hs[i]:>10.4e}"
        for k in names:
            rate = "  --  " if i == 0 else f"{table.rates[k][i - 1]:>6.3f}"
            row += f" {table.errors[k][i]:>14.6e} {rate}"
        lines.append(row)
    for k, v in table.extras.items():
        lines.append(f"  {k}: {v:.3e}")
    return "\n".join(lines) + "\n"


def eoc_figure(table, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for name, errs in table.errors.items():
        positive = [(h, e) for h, e in zip(table.hs, errs) if e > 0]
        if positive:
            ax.loglog(*zip(*positive), marker="o", label=name)
    hs = table.hs
    if table.errors:
        emax = max(max(e for e in v if e > 0, default=1.0)
                   for v in table.errors.values())
        ref = [emax * h / hs[0] for h in hs]
        ax.loglog(hs, ref, "k--", linewidth=0.8, label="slope 1")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.set_title(table.label)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def timeseries_figures(reports, outdir) -> list:
    """Energy / helicity / divergence plots for one simulation run."""
    t = [r.t for r in reports]
    made = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(t, [r.energy for r in reports], label="energy")
    ax.plot(t, [r.magnetic_helicity for r in reports],
            label="magnetic helicity")
    ax.plot(t, [r.cross_helicity for r in reports], label="cross helicity")
    ax.set_xlabel("t")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("conserved functionals")
    fig.tight_layout()
    path = os.path.join(outdir, "functionals.png")
    fig.savefig(path, dpi=140)
    plt.close(fig)
    made.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    e0, hm0, hc0 = (reports[0].energy, reports[0].magnetic_helicity,
                    reports[0].cross_helicity)
    ax.semilogy(t, [abs(r.energy - e0) / max(abs(e0), 1e-30) + 1e-18
                    for r in reports], label="|energy drift|")
    ax.semilogy(t, [abs(r.magnetic_helicity - hm0) / max(abs(hm0), 1e-30)
                    + 1e-18 for r in reports], label="|H_m drift|")
    ax.semilogy(t, [abs(r.cross_helicity - hc0) / max(abs(hc0), 1e-30)
                    + 1e-18 for r in reports], label="|H_c drift|")
    ax.set_xlabel("t")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("relative drift")
    fig.tight_layout()
    path = os.path.join(outdir, "drift.png")
    fig.savefig(path, dpi=140)
    plt.close(fig)
    made.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(t, [r.div_b_max + 1e-18 for r in reports],
                label="max |D2 B|")
    ax.semilogy(t, [r.div_b_l2 + 1e-18 for r in reports],
                label="||div B||_0")
    ax.set_xlabel("t")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("magnetic Gauss law")
    fig.tight_layout()
    path = os.path.join(outdir, "divergence.png")
    fig.savefig(path, dpi=140)
    plt.close(fig)
    made.append(path)
    return made


def battery_to_text(checks) -> str:
    lines = []
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"[{status}] {c.name}: {c.value:.3e} (tol {c.tol:g})")
    return "\n".join(lines) + "\n"


def battery_to_csv(checks, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check", "value", "tolerance", "passed"])
        for c in checks:
            writer.writerow([c.name, f"{c.value:.17g}", f"{c.tol:.17g}",
                             int(c.passed)])


def write_timeseries_csv(reports, path) -> None:
    from .diagnostics import write_report_csv
    write_report_csv(reports, path)


TIMESERIES_COLUMNS = CSV_COLUMNS

"""CSV and markdown emission for suite results.

Table cells are formatted at 2 decimals (Python's round-half-to-even) and the
per-row minimum mean is bolded. Every aggregate number is traceable to the
per-sequence CSV written next to the tables.
"""

from __future__ import annotations

from pathlib import Path

from .stats import PairedStats


def _cell(mean: float, std: float, bold: bool) -> str:
    text = f"{mean:.2f} ± {std:.2f}"
    return f"**{text}**" if bold else text


def aggregate_markdown(result) -> str:
    methods = list(result.config["methods"])
    lines = ["| Family | " + " | ".join(methods) + " |",
             "|---" * (len(methods) + 1) + "|"]
    for family in result.config["families"]:
        means = {m: result.aggregates[(family, m)]["mean"] for m in methods}
        best = min(means.values()) if means else None
        cells = [_cell(means[m], result.aggregates[(family, m)]["std"], means[m] == best)
                 for m in methods]
        lines.append(f"| {family} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def winrate_markdown(result, method: str = "learned") -> str:
    baselines = [m for m in result.config["methods"] if m != method]
    header = ["Family"]
    for b in baselines:
        header += [f"WinRate vs {b}", f"AvgImprov vs {b} (abs)", f"AvgImprov vs {b} (rel)"]
    lines = ["| " + " | ".join(header) + " |", "|---" * len(header) + "|"]
    for family in result.config["families"]:
        cells = [family]
        for b in baselines:
            ps: PairedStats | None = result.pairs.get((family, method, b))
            if ps is None:
                cells += ["n/a", "n/a", "n/a"]
            else:
                cells += [f"{100 * ps.win_rate:.0f}%", f"{ps.mean_improvement:.2f}",
                          f"{100 * ps.rel_improvement:.1f}%"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def improvement_grid_markdown(grid: dict) -> str:
    """Grid cells: mean (baseline regret - ours regret); positive favors ours."""
    dfs = sorted({k[0] for k in grid})
    jps = sorted({k[1] for k in grid})
    lines = ["| df \\ jump_prob | " + " | ".join(f"{jp:.2f}" for jp in jps) + " |",
             "|---" * (len(jps) + 1) + "|"]
    for df in dfs:
        cells = [f"{grid[(df, jp)]:.2f}" for jp in jps]
        lines.append(f"| {df:.1f} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def electricity_markdown(result) -> str:
    methods = sorted({m for _b, m, _n, _s in result.rows})
    budgets = sorted({b for b, _m, _n, _s in result.rows})
    by = {(b, m): n for b, m, n, _s in result.rows}
    lines = ["| S | " + " | ".join(methods) + " | ordering holds |",
             "|---" * (len(methods) + 2) + "|"]
    for b in budgets:
        vals = {m: by[(b, m)] for m in methods}
        best = min(vals.values())
        cells = [f"**{v:.5f}**" if v == best else f"{v:.5f}" for v in vals.values()]
        lines.append(f"| {b} | " + " | ".join(cells) + f" | {result.orderings[b]} |")
    lines.append("")
    lines.append("ordering flag: learned <= genshare_heuristic <= fixed_share "
                 "(reported, not asserted; depends on the expert-grid choices)")
    return "\n".join(lines) + "\n"


def sequence_csv(result) -> str:
    lines = ["family,seed,method,dyn_regret,norm_regret,cert_slack,runtime_s"]
    for s in result.scores:
        lines.append(f"{s.family},{s.seed},{s.method},{s.dyn_regret!r},"
                     f"{s.norm_regret!r},{s.cert_slack!r},{s.runtime_s:.6f}")
    return "\n".join(lines) + "\n"


def aggregate_csv(result) -> str:
    lines = ["family,method,mean,std,n"]
    for (family, method), agg in sorted(result.aggregates.items()):
        lines.append(f"{family},{method},{agg['mean']!r},{agg['std']!r},{agg['n']}")
    return "\n".join(lines) + "\n"


def pairs_csv(result) -> str:
    lines = ["family,method_a,method_b,n,mean_improvement,rel_improvement,"
             "t_pvalue,wilcoxon_pvalue,cohens_d,win_rate"]
    for (family, a, b), ps in sorted(result.pairs.items()):
        lines.append(f"{family},{a},{b},{ps.n},{ps.mean_improvement!r},"
                     f"{ps.rel_improvement!r},{ps.t_pvalue!r},{ps.wilcoxon_pvalue!r},"
                     f"{ps.cohens_d!r},{ps.win_rate!r}")
    return "\n".join(lines) + "\n"


def emit_reports(result, out_dir, plots: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(sequence_csv(result))
    (out / "aggregate.csv").write_text(aggregate_csv(result))
    (out / "pairs.csv").write_text(pairs_csv(result))
    tables = aggregate_markdown(result)
    if "learned" in result.config["methods"] and result.pairs:
        tables += "\n" + winrate_markdown(result)
    (out / "tables.md").write_text(tables)
    if plots:
        _emit_plots(result, out)


def _emit_plots(result, out: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    methods = list(result.config["methods"])
    families = list(result.config["families"])
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(1.5 * max(len(families), 4), 4))
    for i, method in enumerate(methods):
        means = [result.aggregates[(f, method)]["mean"] for f in families]
        stds = [result.aggregates[(f, method)]["std"] for f in families]
        xs = [j + i * width for j in range(len(families))]
        ax.bar(xs, means, width=width, yerr=stds, label=method, capsize=2)
    ax.set_xticks([j + 0.4 for j in range(len(families))])
    ax.set_xticklabels(families)
    ax.set_ylabel("dynamic regret")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "aggregate.png", dpi=120)
    plt.close(fig)

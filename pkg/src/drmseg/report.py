"""Run reports: JSON summary, per-iteration CSV counters and matplotlib figures."""

from __future__ import annotations

import csv
import io
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .drm import MergeTrace, audit_termination, objective_audit  # noqa: E402

SCHEMA_VERSION = 1
DEGREE_THRESHOLD = 15

COUNTER_FIELDS = ("iteration", "live_nodes", "rag_edges", "nng_cycles", "rescanned_nodes", "edges_examined")


def degree_summary(hist: dict[int, int], threshold: int = DEGREE_THRESHOLD) -> dict:
    total = sum(hist.values())
    below = sum(c for d, c in hist.items() if d < threshold)
    return {
        "histogram": {str(d): c for d, c in sorted(hist.items())},
        "threshold": threshold,
        "fraction_below_threshold": below / total if total else 1.0,
    }


def build_report(config: dict, seed: int, trace: MergeTrace, initial_regions: int, final_regions: int,
                 timings_ms: dict, verbose: bool = False) -> dict:
    f_total, _ = objective_audit(trace)
    audit = audit_termination(trace.final_rag, trace.final_nng, trace)
    report = {
        "schema": SCHEMA_VERSION,
        "config": config,
        "seed": seed,
        "initial_regions": initial_regions,
        "final_regions": final_regions,
        "merge_count": trace.merge_count,
        "blacklist_count": trace.blacklist_count,
        "capped_tests": trace.capped_tests,
        "f_total": f_total,
        "audit": {
            "objective_replay": True,
            "not_under_merged": audit["not_under_merged"],
            "not_over_merged": audit["not_over_merged"],
        },
        "search_work": {
            "setup_edges_examined": trace.setup_edges_examined,
            "edges_examined": sum(c["edges_examined"] for c in trace.counters),
        },
        "degree": degree_summary(trace.initial_rag.degree_histogram()),
        "iteration_counters": trace.counters,
        "phase_timings_ms": timings_ms,
    }
    if verbose:
        report["tests"] = [
            {"iteration": e.iteration, "pair": [e.a, e.b], "weight": e.weight, "trials": e.trials,
             "delta": e.delta, "decision": "consistent" if e.merged else "inconsistent"}
            for e in trace.events
        ]
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False) + "\n"


def counters_csv(counters: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COUNTER_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in counters:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in COUNTER_FIELDS})
    return buf.getvalue()


def plot_counters(counters: list[dict], path) -> None:
    """RAG edges against NNG cycles over the merge iterations."""
    its = [c["iteration"] for c in counters]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(its, [c["rag_edges"] for c in counters], color="tab:blue", label="RAG edges")
    cycles = [(c["iteration"], c["nng_cycles"]) for c in counters if c["nng_cycles"] is not None]
    if cycles:
        ax.plot(*zip(*cycles), color="tab:red", label="NNG cycles")
    ax.set_xlabel("iteration")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_degree_histogram(hist: dict[int, int], path, threshold: int = DEGREE_THRESHOLD) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    degrees = sorted(hist)
    ax.bar(degrees, [hist[d] for d in degrees], color="tab:gray")
    ax.axvline(threshold - 0.5, color="tab:red", linestyle="--", label=f"degree {threshold}")
    ax.set_xlabel("node degree")
    ax.set_ylabel("nodes")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)

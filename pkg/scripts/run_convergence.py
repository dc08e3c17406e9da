"""Convergence study of the polynomial/multipoint approximants for a config file.

    python3 scripts/run_convergence.py configs/sturm_liouville.json --probes 4
"""

import argparse
import json
import time

from genbvp.approx import convergence_study, study_summary
from genbvp.config import build_plan, build_problem, load_document


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("--probes", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()
    doc = load_document(args.config)
    target = build_problem(doc["problem"])
    plan = build_plan(doc, target)
    probes = args.probes if args.probes is not None else int(doc["plan"].get("probes", 4))
    start = time.perf_counter()
    rows = convergence_study(plan, probes, args.seed, jobs=args.jobs, spikes=doc["plan"].get("spikes"))
    elapsed = time.perf_counter() - start
    print(f"{'k':>3} {'cells':>6} {'coeff_error':>12} {'rhs_error':>12} {'boundary_gap':>13} {'solution_error':>15} {'inverse_gap':>12}")
    for r in rows:
        print(f"{r.k:3d} {r.cells:6d} {r.coeff_error:12.4e} {r.rhs_error:12.4e} {r.boundary_gap:13.4e} "
              f"{r.solution_error:15.4e} {r.inverse_gap:12.4e}")
    print(json.dumps(study_summary(rows, target.index.p), indent=2, default=str))
    print(f"elapsed {elapsed:.1f} s")


if __name__ == "__main__":
    main()

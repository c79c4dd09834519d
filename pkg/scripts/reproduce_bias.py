"""Print model, live and bias columns per failure fraction on the demo fixture.

Model columns are exact oracle aggregates; the live column comes from the
chaos emulator with noise knobs fitted by ``calibrate_noise`` against the
reference bias row.

    python3 scripts/reproduce_bias.py --rounding half_even
"""

import argparse
import tempfile

from availsim.chaos import ChaosConfig, calibrate_noise, expected_recorded, live_availability, run_chaos
from availsim.core import load_targets
from availsim.graph import load_graph
from availsim.oracle import exact_records
from availsim.pipeline import copy_demo, read_service_file
from availsim.reporting import bias_table
from availsim.simulation import DEFAULT_FRACTIONS, aggregate_availability, eligible_set, kill_count


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounding", choices=["half_up", "half_even"], default="half_up")
    ap.add_argument("--chunks", type=int, default=50)
    ap.add_argument("--workspace", default=None, help="copy the demo here instead of a temp dir")
    args = ap.parse_args()

    ws = copy_demo(args.workspace or tempfile.mkdtemp(prefix="availsim-"))
    graph = load_graph((ws / "truth.json").read_bytes())
    endpoints = load_targets((ws / "targets.json").read_text())
    disallow = read_service_file(ws / "disallowlist.txt")
    eligible = eligible_set(graph, disallow)

    exact = exact_records(graph, endpoints, eligible, DEFAULT_FRACTIONS, args.rounding)
    model = {a.p_fail: a.estimate for a in aggregate_availability(exact)
             if a.semantics.value == "all_blocking"}
    gray, rescue = calibrate_noise(model)
    print(f"rounding={args.rounding} gray_failure_prob={gray:.4f} retry_rescue_prob={rescue:.4f}")

    cfg = ChaosConfig(chunks=args.chunks, gray_failure_prob=gray, retry_rescue_prob=rescue,
                      rounding=args.rounding)
    live = live_availability(run_chaos(graph, endpoints, cfg, disallow))
    print(f"{'p_fail':>6} {'k':>3} {'live':>6} {'all':>6} {'async':>6} {'bias':>7} {'expected':>8}")
    for row in bias_table(exact, live):
        a = row.model_all
        print(f"{row.p_fail:>6} {kill_count(row.p_fail, len(eligible), args.rounding):>3} "
              f"{row.live_aggregate:6.3f} {a:6.3f} {row.model_async:6.3f} {row.bias_all:+7.3f} "
              f"{a - expected_recorded(a, gray, rescue):+8.3f}")


if __name__ == "__main__":
    main()

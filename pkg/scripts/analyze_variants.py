#!/usr/bin/env python3
"""Static parameter/FLOP budgets for the three convolutional-unit variants.

Prints one row per variant for the multi-task model plus the summed cost of
four single-task models, at the chosen input resolution. FLOP figures count
multiply-accumulates.
"""

import argparse
from pathlib import Path

from affectpipe import dataio as dio
from affectpipe import graph as gr


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input-hw", type=int, default=224)
    ap.add_argument("--report", type=Path, default=None,
                    help="optional JSON report path")
    ap.add_argument("--layers", action="store_true",
                    help="also print the per-layer table for each variant")
    args = ap.parse_args()
    hw = (args.input_hw, args.input_hw)

    print(f"{'variant':<12} {'multi params':>13} {'multi MFLOPs':>13} "
          f"{'4x single params':>17} {'sum/4x':>7}")
    report = {"input_hw": args.input_hw, "variants": {}}
    for kind in gr.CU_KINDS:
        multi = gr.build_graph(kind, input_hw=hw)
        params = gr.count_params(multi)
        flops = gr.count_flops(multi)
        single = sum(gr.count_params(gr.build_graph(kind, mode=t, input_hw=hw))
                     for t in gr.TASKS)
        print(f"{kind:<12} {params:>13,} {flops / 1e6:>13,.1f} "
              f"{single:>17,} {single / (4 * params):>7.4f}")
        report["variants"][kind] = {
            "params": params,
            "flops": flops,
            "single_task_param_sum": single,
            "layers": gr.layer_table(multi),
        }
        if args.layers:
            for row in gr.layer_table(multi):
                h, w, c = row["output"]
                print(f"    {row['name']:<16} {h:>4}x{w:<4} c={c:<4} "
                      f"params {row['params']:>9,}  MFLOPs {row['flops'] / 1e6:>9.2f}")

    if args.report is not None:
        dio.write_report(report, args.report)
        print(f"\nreport written to {args.report}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

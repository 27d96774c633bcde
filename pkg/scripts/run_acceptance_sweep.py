#!/usr/bin/env python3
"""Run the gap-versus-n sweep on the fixed acceptance instance.

Writes rows.csv, summary.csv, and gap_vs_n.svg under the config's output
directory.  Worker count comes from SKIPRL_WORKERS (default 1).
"""
import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from skiprl.harness import ExperimentConfig, emit_plots, sweep

CONFIG = pathlib.Path(__file__).resolve().parent / "acceptance_config.json"


def main() -> int:
    cfg = ExperimentConfig.from_json(CONFIG.read_text())
    result = sweep(cfg)
    paths = emit_plots(result, cfg.output_dir)
    print(f"v*(s1) = {result.vstar:.6g}")
    for n, cal in sorted(result.calibrations.items()):
        print(f"n = {n}: calibrated beta {cal['beta']:.4g}, eps_bar {cal['eps_bar']:.4g}")
    for row in result.summary:
        print(
            f"n = {row['n']:>6}: median gap {row['median_gap']:.5f} "
            f"(IQR {row['iqr_low']:.5f}..{row['iqr_high']:.5f})"
        )
    print(json.dumps(paths, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())

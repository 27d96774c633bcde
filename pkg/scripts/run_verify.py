#!/usr/bin/env python3
"""Run every lemma verification suite and write the report."""
import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from skiprl.harness import verify


def main() -> int:
    report = verify(seed=0)
    for entry in report["suites"]:
        status = "pass" if entry["pass"] else "FAIL"
        print(
            f"{status}  {entry['name']:<22} worst slack {entry['worst_slack']:+.3e} "
            f"(tol {entry['tolerance']:.0e})  [{entry['instances']}]"
        )
    out = pathlib.Path("results") / "verify_report.json"
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"report: {out}")
    return 0 if report["all_pass"] else 1


if __name__ == "__main__":
    sys.exit(main())

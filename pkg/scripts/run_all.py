#!/usr/bin/env python3
"""Run every sample config through the plap CLI and summarize the verdicts.

Reports land in out/<subcommand>/ next to this script.  Exit code is the
number of failing subcommands.
"""

import json
import pathlib
import sys

from plap import cli

HERE = pathlib.Path(__file__).parent
ORDER = ["checks", "forward", "dn", "linearize", "fixedpoint", "recover", "rescale"]


def main() -> int:
    failures = 0
    for name in ORDER:
        cfg = HERE / "configs" / f"{name}.cfg"
        out = HERE / "out" / name
        code = cli.main([name, "--config", str(cfg), "--out", str(out)])
        report = json.loads((out / "report.json").read_text())
        status = "PASS" if report.get("pass") else "FAIL"
        extra = ""
        if "error" in report:
            extra = f" ({report['error']['type']}: {report['error']['message']})"
        print(f"{name:<10} {status} exit={code}{extra}")
        failures += code != 0
    return failures


if __name__ == "__main__":
    sys.exit(main())

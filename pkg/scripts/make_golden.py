"""Regenerate the committed golden trace (default config, seed 42).

Only rerun this after an intentional numerical change; the regression test
compares against the file it writes.
"""

from pathlib import Path

from viewreg.cli import cmd_optimize

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    out = ROOT / "tests" / "golden" / "trace_seed42.csv"
    report = cmd_optimize(ROOT / "configs" / "default.json", 42, out)
    print(f"wrote {out} ({report['outputs']['iterations']} iterations)")

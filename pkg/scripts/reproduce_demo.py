"""Run both Fibonacci demonstrations with the mock provider and summarise.

    python3 scripts/reproduce_demo.py [--out runs] [--seed 42]
"""

import argparse
import json
from pathlib import Path

from llmgi.cli import main
from llmgi.config import FIXTURES


def run_one(name: str, out: Path, seed: int) -> None:
    dest = out / name
    code = main(["run", "--config", str(FIXTURES / f"{name}.toml"), "--out", str(dest), "--seed", str(seed)])
    run_dir = sorted(dest.iterdir(), key=lambda p: p.stat().st_mtime)[-1]
    report = json.loads((run_dir / "report.json").read_text())
    metric = "time_ms" if name == "time" else "peak_mem_bytes"
    base, best = report["baseline"][metric], report["best"]["fitness"][metric]
    ratio = base / best if best else float("inf")
    print(f"{name:6s} exit={code} {metric}: {base} -> {best} (x{ratio:.1f}) "
          f"edits={len(report['best']['patch']['edits'])} stop={report['stop_reason']} "
          f"llm_calls={report['llm_calls']}")
    print((run_dir / "best.py").read_text())


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    for name in ("time", "memory"):
        run_one(name, Path(args.out), args.seed)

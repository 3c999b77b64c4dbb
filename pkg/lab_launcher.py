#!/usr/bin/env python3

"""
🧪 nslab Launcher
Runs every manifest under manifests/ and prints one line per run.
"""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent
MANIFESTS = sorted((ROOT / "manifests").glob("*.json"))
OUTCOMES = {0: "✅ all checks passed", 1: "⚠️ a check failed", 2: "❌ run failed", 3: "❌ invalid input"}

print("🧪 nslab experiment launcher")
print("=" * 40)

if not MANIFESTS:
    print("⚠️ No manifests found under manifests/")
    sys.exit(3)

worst = 0
for manifest in MANIFESTS:
    print(f"🔄 {manifest.stem} ...")
    try:
        result = subprocess.run(
            [sys.executable, "-m", "nslab", "run", str(manifest), "--log-level", "WARNING"],
            cwd=ROOT,
            capture_output=True,
            text=True,
        )
    except OSError as e:
        print(f"❌ Could not start the run: {e}")
        sys.exit(2)
    outcome = OUTCOMES.get(result.returncode, f"❓ exit code {result.returncode}")
    print(f"   {outcome}")
    if result.stdout.strip():
        print(f"   📁 {result.stdout.strip().splitlines()[-1]}")
    worst = max(worst, result.returncode)

print()
print("🎉 Done!" if worst == 0 else "💡 Inspect the summary.json files above for the failing checks")
sys.exit(worst)

"""Print the planar reports showing why the raw spec cannot be used directly."""
import json

from distsynth.cli import counterexample_report

if __name__ == "__main__":
    for which in ("tp1", "tp2"):
        print(json.dumps(counterexample_report(which), indent=2, sort_keys=True))

"""Run all acceptance criteria and print one line per criterion.

Exits non-zero if any criterion fails or overruns its time budget.
"""
import sys

from levy_lab.acceptance import run_all

if __name__ == "__main__":
    results = run_all()
    passed = sum(r.ok for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    sys.exit(0 if passed == len(results) else 1)

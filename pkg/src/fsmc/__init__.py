"""Compiler toolchain for a small typed functional array language."""

import sys as _sys

# Deep let chains from ANF conversion need headroom; pipeline entry points
# run on a large-stack worker thread (see errors.run_deep).
if _sys.getrecursionlimit() < 100_000:
    _sys.setrecursionlimit(100_000)

from __future__ import annotations

from tof_coverage.cli import main

if __name__ == "__main__":
    raise SystemExit(main())

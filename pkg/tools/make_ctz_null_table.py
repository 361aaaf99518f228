"""Regenerate the packaged finite-sample critical-value table for the jump test.

Usage: python3 tools/make_ctz_null_table.py

Simulates the scale-free constant-volatility null with a fixed seed and
stores upper-tail quantiles of the statistic for the default threshold
config at the standard 120-interval grid.
"""

import json
from pathlib import Path

from carbonvol.config import ThresholdConfig
from carbonvol.measures import (_NULL_TABLE_DAYS, _NULL_TABLE_SEED,
                                _calibrate_null_quantiles, _null_table_path)

GRID_SIZES = (120,)


def main():
    config = ThresholdConfig()
    tables = []
    for n in GRID_SIZES:
        tails, quants = _calibrate_null_quantiles(n, config)
        tables.append({
            "key": list(config.null_key(n)),
            "tails": list(map(float, tails)),
            "quantiles": list(map(float, quants)),
        })
        print(f"n={n}: q(0.1%)~{quants[-4]:.4f} vs asymptotic 3.0902")
    path = _null_table_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({
        "n_days": _NULL_TABLE_DAYS,
        "seed": _NULL_TABLE_SEED,
        "tables": tables,
    }, indent=1))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

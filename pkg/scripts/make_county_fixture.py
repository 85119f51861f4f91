#!/usr/bin/env python3
"""Regenerate the checked-in 30-county synthetic panel (data/county30).

The panel is produced by the simulate subcommand with a pinned seed, so
this script rewrites byte-identical files; rerun it only to change the
fixture deliberately.
"""

import json
import os
import sys

from dosepair.cli import main

CONFIG = {
    "simulate": {
        "seed": 20200301,
        "n_counties": 30,
        "horizon": 155,
        "start_date": "2020-03-01",
        "beta0": 0.32,
        "gamma": 0.11,
        "i0_frac": 0.0008,
        "death_fraction": 0.01,
        "death_delay": 14,
    }
}
def run(out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    cfg_path = os.path.join(out_dir, "config_simulate.json")
    with open(cfg_path, "w") as fh:
        json.dump(CONFIG, fh, indent=2, sort_keys=True)
        fh.write("\n")
    code = main(["simulate", "--config", cfg_path, "--out", out_dir])
    # the manifest records the invocation path of the config, which varies
    # with the working directory; the fixture's provenance is this script
    manifest = os.path.join(out_dir, "manifest.json")
    if os.path.exists(manifest):
        os.unlink(manifest)
    return code
if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "county30")
    sys.exit(run(target))

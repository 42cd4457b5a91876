#!/usr/bin/env python3
"""
AdvNF experiment pipeline.

Generate MCMC ensembles for the desk XY preset:
    python3 scripts/advnf.py gen-data --preset xy-desk --jobs 4

Train and evaluate from a config file:
    python3 scripts/advnf.py train --config configs/xy_desk.toml --seed 1
    python3 scripts/advnf.py evaluate --config configs/xy_desk.toml --seed 1

Draw IMH-corrected samples at T = 0.9:
    python3 scripts/advnf.py sample --checkpoint runs/xy-desk/model.ckpt.json --condition 0.9 --n 500 --imh

Reproduce a comparison study:
    python3 scripts/advnf.py reproduce table1 --seed 0 --out runs/table1
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from advnf.cli import main

if __name__ == "__main__":
    sys.exit(main())

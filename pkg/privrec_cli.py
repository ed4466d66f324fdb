#!/usr/bin/env python
"""
Differentially private recommendations on a social graph.

Example:
--------
python privrec_cli.py ingest --input data/wiki-Vote.txt.gz --output data/wiki-Vote.prgc

python privrec_cli.py evaluate \
    --input data/wiki-Vote.prgc \
    --output-dir results/eps0.1 \
    --epsilon 0.1 \
    --utility cn \
    --mechanism exp lap \
    --trials 1000 \
    --seed 7 \
    --workers 8

python privrec_cli.py audit --mechanism exp --epsilon 0.5 --max-nodes 6
"""

import sys

from privrec.cli import main

if __name__ == "__main__":
    sys.exit(main())

import sys

from src.cli import main


if __name__ == "__main__":
    # Run from the repository root: `python sgan-vc.py train --manifest mel_cache/manifest.csv`.
    sys.exit(main())

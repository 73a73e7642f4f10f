"""Entry point for ``python -m avgreward_opl``."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())

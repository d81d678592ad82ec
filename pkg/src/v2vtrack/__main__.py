"""Allow ``python -m v2vtrack``."""

import sys

from .cli import main

sys.exit(main())

"""Module entry point: python -m antitonic ..."""

import sys

from .cli import main

sys.exit(main())

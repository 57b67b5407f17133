"""Module entry point: ``python -m wregress``."""

import sys

from .cli import main

sys.exit(main())

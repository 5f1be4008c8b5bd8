"""python -m edbl"""
import sys

from .cli import main

sys.exit(main())

import sys

from mgar_topopt.cli import main

sys.exit(main())

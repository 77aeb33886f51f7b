import sys

from ptsmc.cli import main

sys.exit(main())

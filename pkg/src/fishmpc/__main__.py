import sys

from fishmpc.cli import main

sys.exit(main())

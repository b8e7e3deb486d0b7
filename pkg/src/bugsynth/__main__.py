import sys

from bugsynth.cli import main

sys.exit(main())

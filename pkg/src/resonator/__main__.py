import sys

from resonator.cli import main

sys.exit(main())

import sys

from svf.cli import main

sys.exit(main())

import sys

from pirlab.cli import main

sys.exit(main())

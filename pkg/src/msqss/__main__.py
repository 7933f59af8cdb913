import sys

from msqss.cli import main

sys.exit(main())

import sys

from harmq.cli import main

sys.exit(main())

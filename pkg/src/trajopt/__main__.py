import sys

from trajopt.cli import main

sys.exit(main())

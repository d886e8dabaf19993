import sys

from shbsim.cli import main

sys.exit(main())

import sys

from tmd_chaos._cli import main

sys.exit(main())

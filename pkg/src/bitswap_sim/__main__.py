import sys

from bitswap_sim.cli import main

sys.exit(main())

#!/usr/bin/python3
"""
SuspicionToolbox - continuous suspicion scores for detected suspicious actions

This script provides a command line interface to the SuspicionToolbox package.
"""

import sys
from SuspicionToolbox.__main__ import main

if __name__ == "__main__":
    sys.exit(main())

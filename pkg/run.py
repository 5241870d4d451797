#!/usr/bin/env python3
"""
Entry point for running the toolkit from a source checkout
"""
import os
import sys

# Add the current directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ssfcodec.cli import main

if __name__ == '__main__':
    sys.exit(main())

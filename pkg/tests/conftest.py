import os
import sys

# make the oracle module importable as a plain module from every test file
sys.path.insert(0, os.path.dirname(__file__))

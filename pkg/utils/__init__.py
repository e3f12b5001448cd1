"""
Utils package for cmvband.
Contains logging setup and small helpers.
"""

from .helpers import *

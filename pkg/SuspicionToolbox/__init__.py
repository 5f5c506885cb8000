#!/usr/bin/python3
"""
SuspicionToolbox - continuous suspicion-score modelling for detected suspicious actions
"""

__version__ = '0.1.0'

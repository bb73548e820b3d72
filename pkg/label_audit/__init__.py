# -*- coding: utf-8 -*-
#
#  __init__.py
#  label_audit
#

"""
Post-hoc auditing of labelled datasets: find and fix label errors by
comparing each example with its nearest neighbours in a trusted auxiliary
set, in the penultimate feature space of a trained model. Confidence and
gradient based scorers are included for comparison.
"""

__version__ = '1.0.0'

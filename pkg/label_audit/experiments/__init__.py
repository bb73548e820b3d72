# -*- coding: utf-8 -*-
#
#  __init__.py
#  label_audit
#

"""
Protocol scripts that repeat the audit over several seeds and summarise the
results.
"""

# -*- coding: utf-8 -*-
#
#  setup.py
#  label_audit
#

"""
Package information for label_audit.
"""

from setuptools import setup

setup(
    name='label_audit',
    version='1.0.0',
    license='BSD',
    python_requires='>=3.8',
    install_requires=[
        'numpy',
        'scipy',
        'pandas',
        'simplejson',
        'tqdm',
        'matplotlib',
    ],
    extras_require={
        'test': ['pytest'],
    },
    packages=['label_audit', 'label_audit.experiments'],
    scripts=['label_audit.py'],
    zip_safe=False,
)

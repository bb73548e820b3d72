# -*- coding: utf-8 -*-
#
#  errors.py
#  label_audit
#

"""
Exceptions raised by the auditing toolkit. Each class knows the process exit
code the command-line interface reports it with.
"""


class LabelAuditError(Exception):
    """Base class for every error the toolkit raises on purpose."""
    exit_code = 1


class ArgumentError(LabelAuditError, ValueError):
    """A caller passed a value outside an operation's domain."""
    exit_code = 2


class FormatError(LabelAuditError):
    """A file does not follow its declared format."""
    exit_code = 3


class ValidationError(LabelAuditError):
    """Well-formed input whose content breaks a data invariant."""
    exit_code = 3


class NumericError(LabelAuditError, ArithmeticError):
    exit_code = 4


class TrainingError(NumericError):
    """Training produced a non-finite loss."""
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f'non-finite training loss at epoch {epoch}')


class SolverError(NumericError):
    """The inverse-Hessian solver diverged."""


class UndefinedMetricError(LabelAuditError):
    """A metric has no defined value for the given inputs."""
    exit_code = 5


class UndefinedScoreError(UndefinedMetricError):
    """A pairwise score is undefined, e.g. the cosine of a zero gradient."""


class UndefinedSimilarityError(UndefinedScoreError):
    """Cosine similarity requested for a zero feature vector."""

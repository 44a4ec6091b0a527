# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Exception types raised across DLAlign
Each carries the process exit code the CLI maps it to
"""


class DLAlignError(Exception):
	exit_code = 1


class ValidationError(DLAlignError):
	"""Bad input, bad config or a violated precondition"""
	exit_code = 2


class LockError(DLAlignError):
	"""Output directory is owned by another running pipeline"""
	exit_code = 2


class DigestMismatchError(DLAlignError):
	"""An upstream artifact no longer matches the digest its stage recorded"""
	exit_code = 3


class NumericFaultError(DLAlignError):
	"""Non-finite state, gradient or loss"""
	exit_code = 4

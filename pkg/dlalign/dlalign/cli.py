# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Command line entry point

	dlalign <subcommand> [--config PATH] [--seed N] [--out DIR] [--method NAME] [--resume]

Subcommands are resolved through the hooks registry. Exit codes: 0 success,
2 config/validation error or locked output directory, 3 digest mismatch,
4 numeric fault.
"""

import argparse
import sys

from dlalign import hooks
from dlalign.dlalign.config import ALIGN_METHODS, load_config
from dlalign.dlalign.exceptions import DLAlignError
from dlalign.dlalign.utils import get_attr, logger, setup_logging


def build_parser():
	parser = argparse.ArgumentParser(prog="dlalign", description=hooks.app_description)
	subparsers = parser.add_subparsers(dest="command", required=True)

	for name in hooks.commands:
		sub = subparsers.add_parser(name)
		sub.add_argument("--config", default=None, help="YAML run config or preset name (default, smoke)")
		sub.add_argument("--seed", type=int, default=None, help="Override the config seed")
		sub.add_argument("--out", default=None, help="Override io.output_dir")
		sub.add_argument("--method", choices=ALIGN_METHODS, default=None, help="Override align.method")
		sub.add_argument("--resume", action="store_true", help="Re-run stages whose outputs fail verification")
		sub.add_argument("-v", "--verbose", action="store_true")
		if name == "eval":
			sub.add_argument("--which", choices=("open", "closed", "all"), default="all")

	status = subparsers.add_parser("status", help="Print the stage table of a run directory")
	status.add_argument("out", help="Run output directory")
	status.add_argument("-v", "--verbose", action="store_true")
	return parser


def exit_code_for(error):
	"""Exit code registered for an exception (most specific class first)"""
	for cls in type(error).__mro__:
		path = f"{cls.__module__}.{cls.__qualname__}"
		if path in hooks.exit_codes:
			return hooks.exit_codes[path]
	return getattr(error, "exit_code", 1)


def run_command(args):
	"""
	Load the config, apply CLI overrides and run the registered command

	Returns:
		Command result
	"""
	if args.command == "status":
		return get_attr(hooks.status_command)(args.out)

	config = load_config(args.config).with_overrides(seed=args.seed, output_dir=args.out, method=args.method)
	command = get_attr(hooks.commands[args.command])
	kwargs = {"resume": args.resume}
	if args.command == "eval":
		kwargs["which"] = args.which

	logger.info(f"DLAlign: {args.command} -> {config.output_dir} (seed {config.seed}, method {config.method})")
	return command(config, **kwargs)


def main(argv=None):
	args = build_parser().parse_args(argv)
	setup_logging(verbose=args.verbose)

	try:
		run_command(args)
	except DLAlignError as e:
		logger.error(f"DLAlign: {args.command} failed: {str(e)}")
		return exit_code_for(e)
	except KeyboardInterrupt:
		logger.error("DLAlign: interrupted")
		return 130

	return 0


if __name__ == "__main__":
	sys.exit(main())

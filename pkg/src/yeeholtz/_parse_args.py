# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT

"""Command line options of the yeeholtz verbs"""

import argparse
from pathlib import Path
from textwrap import wrap

from yeeholtz.__about__ import __version__

VERBS = {
    "run": "solve the configured problem at its frequency (or frequencies)",
    "sweep": "solve over a range of frequencies, one row per frequency",
    "multifreq": "solve several commensurate frequencies in one solve",
    "verify": "assemble I − S, check its spectrum and contraction rates",
    "convergence": "grid refinement study of a manufactured solution",
}


class GnuStyleHelpFormatter(argparse.HelpFormatter):

    """
    Help formatter listing options as `-c, --config=PATH`: the metavar is
    attached once, to the long form, and flags without values are listed
    bare
    """

    def __init__(self, prog):
        super().__init__(prog, max_help_position=30, width=80)

    def _format_action_invocation(self, action):
        if not action.option_strings:
            (metavar,) = self._metavar_formatter(
                action, self._get_default_metavar_for_positional(action)
            )(1)
            return metavar
        if action.nargs == 0:
            return ", ".join(action.option_strings)

        value = self._format_args(
            action, self._get_default_metavar_for_optional(action)
        )
        return ", ".join(
            opt if not opt.startswith("--") else f"{opt}={value}"
            for opt in action.option_strings
        )

    def _split_lines(self, text, width):  # noqa: ARG002
        return wrap(text, width=50, break_on_hyphens=False)


def positive_int(val):
    """argparse type for integers ≥ 1"""
    try:
        num = int(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer: '{val}'") from None
    if num < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {num}")
    return num


def positive_float(val):
    """argparse type for floats > 0"""
    try:
        num = float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number: '{val}'") from None
    if not num > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {num}")
    return num


def _common_options():
    """Options shared by every verb"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c",
        "--config",
        metavar="PATH",
        type=Path,
        required=True,
        help="run configuration (.toml, or .json as written by a previous run)",
    )
    common.add_argument(
        "-o",
        "--out",
        metavar="DIR",
        type=Path,
        help="output directory (overrides [output] directory)",
    )
    common.add_argument(
        "-j",
        "--threads",
        metavar="K",
        type=positive_int,
        help="number of worker threads for sweeps and dense assembly",
    )
    common.add_argument(
        "-v",
        "--verbose",
        help="increase verbosity (-v, -vv, etc.)",
        action="count",
        default=0,
    )

    solver_opts = common.add_argument_group("Solver options")
    solver_opts.add_argument(
        "--tol",
        metavar="X",
        type=positive_float,
        help="relative residual tolerance (overrides [solve] tolerance)",
    )
    solver_opts.add_argument(
        "--max-iters",
        metavar="K",
        type=positive_int,
        help="iteration budget (overrides [solve] max_iters)",
    )
    solver_opts.add_argument(
        "--periods",
        metavar="N",
        type=positive_int,
        help="filter window in periods (overrides [solve] periods)",
    )
    return common


def parse_args(args):
    """Set up argparse options and parse input args accordingly"""
    parser = argparse.ArgumentParser(
        description=(
            "Solve time harmonic Maxwell problems by filtering Yee time domain"
            f" simulations (version {__version__})."
        ),
        formatter_class=GnuStyleHelpFormatter,
        usage="%(prog)s [OPTIONS] VERB --config=PATH [VERB OPTIONS]",
    )

    parser.add_argument(
        "-V",
        "--version",
        help="print %(prog)s version and exit",
        action="version",
        version=f"%(prog)s {__version__}",
    )

    common = _common_options()
    verbs = parser.add_subparsers(
        title="Verbs", dest="verb", metavar="VERB", required=True
    )
    for verb, desc in VERBS.items():
        verbs.add_parser(
            verb,
            parents=[common],
            help=desc,
            description=desc[0].upper() + desc[1:] + ".",
            formatter_class=GnuStyleHelpFormatter,
        )

    return parser.parse_args(args)

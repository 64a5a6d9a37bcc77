# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#
"""
Exceptions raised by yeeholtz
"""


class YeeHoltzError(Exception):

    """Base class for all errors raised by this package"""


class ConfigurationError(YeeHoltzError):

    """Invalid problem set up, detected before any compute"""

    def __init__(self, msg, line=None):
        """Initialise, optionally with the offending config file line"""
        super().__init__(msg)
        self.line = line

    def __str__(self):
        msg = super().__str__()
        return f"line {self.line}: {msg}" if self.line else msg


class DomainError(ConfigurationError):

    """Argument outside the domain of a function, e.g. arcsin(x > 1)"""


class ContractError(YeeHoltzError):

    """A vector or array does not match the layout it is used with"""


class QuadratureSingularityError(ConfigurationError):

    """A node of the modified quadrature has cos(ω̄ t^n) ≈ 0"""


class BreakdownError(YeeHoltzError):

    """Krylov breakdown, e.g. negative curvature in conjugate gradients"""


class ResonanceError(YeeHoltzError):

    """Frequency coincides with a discrete resonance"""


class SizeGuardError(YeeHoltzError):

    """Problem too large for dense linear algebra"""


class UnsupportedError(YeeHoltzError):

    """Requested analysis is not available for this configuration"""

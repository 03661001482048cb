"""Trust-gated 6LoWPAN fragment admission on top of RPL's Chained Secure Mode, simulated."""

__version__ = "0.1.0"

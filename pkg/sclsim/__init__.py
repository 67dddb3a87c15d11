"""Sclsim - closed-loop power side-channel leakage detection and mitigation simulator."""

__version__ = "0.1.0"

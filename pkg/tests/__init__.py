"""Tests for sclsim."""

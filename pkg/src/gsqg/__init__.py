"""Generalized SQG patch toolkit: boundary geometry, velocity, evolution and splash diagnostics."""

"""Neuro-symbolic open-world adaptation on a small grid domain."""

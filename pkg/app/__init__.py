"""Rough-surface MOM scattering and network surface reconstruction."""

"""Numerical services: kernels, surfaces, MOM, reconstruction and experiment harness."""

"""Relaxation of Kac-model magnetization fields with vortex boundaries."""
__version__ = "0.1.0"

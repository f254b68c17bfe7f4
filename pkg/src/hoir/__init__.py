"""Joint human/object implicit reconstruction from single rendered views."""
__version__ = "0.1.0"

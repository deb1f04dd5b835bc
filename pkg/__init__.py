"""
DSFAD visible-infrared person re-identification package initialization.
"""
__version__ = '0.1.0'

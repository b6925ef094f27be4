"""Metapopulation simulator for a mosquito-borne disease on a patch network
coupled by human travel and short-range mosquito movement."""

__version__ = "0.1.0"

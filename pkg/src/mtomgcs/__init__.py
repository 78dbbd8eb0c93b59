"""Rate-adaptive geometric constellation shaping with many-to-one labelling."""

__version__ = "0.1.0"

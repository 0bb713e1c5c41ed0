"""litpipe: instruction-tuning dataset construction and blinded model evaluation
for biomedical literature corpora."""

__version__ = "0.1.0"

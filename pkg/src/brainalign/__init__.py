"""Brain-alignment engine: ridge encoding models, searchlight
classification evaluation and empirical FDR control."""

__version__ = "0.1.0"

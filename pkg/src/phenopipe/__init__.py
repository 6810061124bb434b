"""Batch phenotyping toolkit for labeled field photos.

Stages: label OCR + regex parsing, leaf location and segmentation,
morphology classification, treatment prediction, EXIF/GPS extraction.
Everything is driven from the ``pheno`` command line tool.
"""

__version__ = "0.1.0"

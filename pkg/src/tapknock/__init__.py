"""Wearable tap and knock gesture authentication: ingest, segmentation,
features, random forests, evaluation protocols and a synthetic study
generator."""

__version__ = "0.1.0"

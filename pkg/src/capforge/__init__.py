"""capforge: build, curate, and evaluate object-level captioning datasets
for remote sensing imagery."""

__version__ = "0.1.0"

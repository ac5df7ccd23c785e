"""Datasets, accuracy and speed evaluation, and mission runs."""

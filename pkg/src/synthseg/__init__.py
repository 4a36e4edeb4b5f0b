"""Procedural segmentation scenes and the semi-supervised benchmark."""

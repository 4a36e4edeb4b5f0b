"""Dense array kernels and the TNSR tensor dump format."""

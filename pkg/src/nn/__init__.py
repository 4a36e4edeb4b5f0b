"""Small layer-stack networks with manual backprop, optimizers and gradient checks."""

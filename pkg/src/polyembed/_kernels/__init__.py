"""Hot numeric kernels, one module per backend with identical signatures."""

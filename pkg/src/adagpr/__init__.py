"""Adaptive layer-wise generalized Pagerank graph convolution (AdaGPR).

Pure numpy implementation: CSR graph kernels, a small reverse-mode
autodiff tape, sparsemax coefficients, GCN / GCNII / GPR-GNN / AdaGPR
models, a transductive training loop and a spectral complexity evaluator.
"""

__version__ = "0.1.0"

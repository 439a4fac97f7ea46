"""kgrenv: an executable environment for agent / knowledge-graph co-evolution.

Subpackages cover the embedded KG store, spectral and coverage diagnostics,
Gibbs retrieval with a GraphRAG readout, the submodular update operator, the
dual reward engine, the six-tool feedback suite with a JSON HTTP service, an
episode simulator, and a prompt-compression bound lab.
"""

__version__ = "0.1.0"

"""Color refinement on node tuples, spectral token encodings, and attention
layers constructed to reproduce the refinement exactly.

The package is organized around plain functions over immutable values:
``graphs`` holds the data model, ``refine`` the refinement engine,
``spectral`` and ``tokens`` the encoder stack, ``simulate`` the constructed
attention layers together with their arithmetic reference, and ``cli`` the
command-line harness.
"""

from .graphs import Graph, builtin_pair, load_graph

__version__ = "0.1.0"

__all__ = ["Graph", "builtin_pair", "load_graph", "__version__"]

"""cgramap: CGRA mapping toolkit.

Place dataflow-graph operations onto the function units of a modulo routing
resource graph and route every dataflow edge along vertex-compatible paths,
via neighbourhood-restricted ILP models solved by a built-in deterministic
branch-and-bound engine, with a fully-generic per-node baseline formulation
for cross-checking.
"""

__version__ = "0.1.0"

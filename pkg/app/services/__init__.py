"""
Services: one module per computation stage plus storage and orchestration.

- lattice: norm enumeration and counting
- secular: secular function and root solves
- trace: both sides of the trace identities
- stats: spacing statistics, heat sums, greedy construction
- spectrum_store: CSV/JSON files and the artifact cache
- pipeline: LangGraph end-to-end run
"""

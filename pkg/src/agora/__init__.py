"""agora: deterministic two-stage service orchestration over a simulated
multi-agent network."""

__version__ = "0.1.0"

"""Trainer and fixture exporter companion to the edgeprof engine.

Talks to the engine exclusively through its published file formats (PCF
point clouds, ECW weights) and CLI; never imports it.
"""

__version__ = "0.1.0"

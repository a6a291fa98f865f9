"""HTTP service exposing the equilibrium pipeline.

create_app builds the FastAPI application; the CLI reuses the same handler
functions in-process, so both front ends produce identical payloads.
"""

from .app import create_app

__all__ = ["create_app"]

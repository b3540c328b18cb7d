"""Video relation detection with trajectory-aware multi-modal features."""

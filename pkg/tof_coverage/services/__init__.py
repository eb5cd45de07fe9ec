"""Core geometry, volumetry and experiment services."""

"""Textual results browser for the DVS attack desk."""

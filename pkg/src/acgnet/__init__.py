"""Segment graph feature enhancement for weakly supervised temporal action localization."""

"""Serializable records shared across toolsight."""

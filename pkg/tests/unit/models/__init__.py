"""Module to test the attribute_fusion models."""

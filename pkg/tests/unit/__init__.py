"""attribute_fusion unit tests."""

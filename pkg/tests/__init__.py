"""Attribute fusion tests."""

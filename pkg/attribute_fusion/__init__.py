"""Attribute fusion: map local catalog records to global characteristics.

Every module logs through the shared ``log`` object defined here.
"""
import logging

log = logging.getLogger(__name__)

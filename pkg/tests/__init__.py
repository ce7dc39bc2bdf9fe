"""Test suite for hfalign."""

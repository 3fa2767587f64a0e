"""
Test package for the reconstruction pipeline.
Contains unit tests, integration tests, and test fixtures.
"""

"""SPARKLING MRI: Utilities"""

"""Tests for SPARKLING MRI"""

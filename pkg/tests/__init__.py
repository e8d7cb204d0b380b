"""Test suite for cirlab"""

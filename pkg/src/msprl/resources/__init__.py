"""Grammars shipped with msprl"""

"""
API package.
"""
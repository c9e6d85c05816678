"""
Protocol Module

Framed classical-channel messages, transports and the two-party session.
"""

"""
Signal front end and feature containers
"""

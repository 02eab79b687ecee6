"""
Low-complexity attention-based anomalous sound detection toolkit
"""

"""
Model components: feature network, backbone, ArcFace head and the assembled detector
"""

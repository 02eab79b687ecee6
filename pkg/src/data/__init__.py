"""
Dataset ingestion, WAV codec and synthetic corpus generation
"""

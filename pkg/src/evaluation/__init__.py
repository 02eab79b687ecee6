"""
Anomaly scoring, detection metrics, reports, attention statistics and parameter accounting
"""

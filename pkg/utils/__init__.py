"""
Utility modules: metrics, dataset and config loading, reporting and plotting helpers.
"""

"""
Service modules: generator model, inversion, likelihood estimation and the evaluation pipeline.
"""

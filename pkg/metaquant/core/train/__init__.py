"""Training engine: optimization strategies, delayed updates and the run loop"""

"""Domain module initialization"""

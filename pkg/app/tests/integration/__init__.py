"""Integration module initialization"""

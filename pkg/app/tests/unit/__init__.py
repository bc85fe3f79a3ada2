"""Unit module initialization"""

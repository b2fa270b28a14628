"""Shared helpers and report exporters"""

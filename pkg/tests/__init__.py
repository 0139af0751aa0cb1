"""metaquant test suite"""

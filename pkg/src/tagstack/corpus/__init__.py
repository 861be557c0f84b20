"""Bundled IR programs: worked examples, benign programs, attack programs and analysis stress cases."""

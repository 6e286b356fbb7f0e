"""Tests package for yamabe-flow-lab."""

# Test package for linkage module

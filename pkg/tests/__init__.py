# Tests package for Digital Krishi Officer API
# Tests package for avgreward-opl

"""CPGA-Net low-light image enhancement engine."""

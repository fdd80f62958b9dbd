"""Coordinated multi-cell near-field ISCAP beamforming."""

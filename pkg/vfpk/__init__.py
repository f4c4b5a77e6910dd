"""vfpk - numerical laboratory for the confined Vlasov-Fokker-Planck equation."""

__version__ = "0.3.0"

from scedlab.cli import ensemble, simulate, verify

COMMAND_MODULES = (simulate, ensemble, verify)

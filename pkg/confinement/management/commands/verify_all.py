from confinement.exceptions import ConfigError
from confinement.run_toolkit import ToolkitCommand
from confinement.verification import CHECKS, run_verify_all


class Command(ToolkitCommand):
    help = 'Run the acceptance suite and write the pass/fail table.'
    subcommand = 'verify_all'

    def add_run_arguments(self, parser):
        parser.add_argument('--only', default='', help='Comma-separated check numbers, e.g. 1,3,7')

    def execute_run(self, config, directory, options):
        only = None
        if options['only']:
            try:
                only = {int(n) for n in options['only'].split(',') if n.strip()}
            except ValueError:
                raise ConfigError(f"--only expects check numbers, got {options['only']!r}") from None
            unknown = only - {number for number, _, _ in CHECKS}
            if unknown:
                raise ConfigError(f"no such checks: {sorted(unknown)}")
        return run_verify_all(config, directory, only=only)

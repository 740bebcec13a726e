from confinement.exceptions import ConfigError
from confinement.kinetic import INITIAL_CONDITIONS, SCHEMES
from confinement.pipelines import run_evolve
from confinement.run_toolkit import ToolkitCommand


class Command(ToolkitCommand):
    help = 'Evolve the kinetic equation in a reflecting box and measure relaxation to equilibrium.'
    subcommand = 'evolve'
    config_overrides = ('ic', 'scheme', 't_end', 'cfl')

    def add_run_arguments(self, parser):
        parser.add_argument('--ic', choices=INITIAL_CONDITIONS)
        parser.add_argument('--scheme', choices=SCHEMES)
        parser.add_argument('--t-end', dest='t_end', type=float)
        parser.add_argument('--cfl', type=float)
        parser.add_argument('--snapshots', default='', help='Comma-separated times at which to store densities.')

    def execute_run(self, config, directory, options):
        try:
            times = tuple(float(t) for t in options['snapshots'].split(',') if t.strip())
        except ValueError:
            raise ConfigError(f"--snapshots expects comma-separated times, got {options['snapshots']!r}") from None
        return run_evolve(config, directory, snapshot_times=times)

from confinement.exceptions import ConfigError
from confinement.pipelines import run_operators
from confinement.run_toolkit import ToolkitCommand


class Command(ToolkitCommand):
    help = 'Assemble L, T and Pi on a small grid and check identities, coercivity and the modified entropy.'
    subcommand = 'operators'
    config_overrides = ('hypo_nx', 'hypo_n_half', 'hypo_L', 'entropy_epsilon')

    def add_run_arguments(self, parser):
        parser.add_argument('--hypo-nx', dest='hypo_nx', type=int)
        parser.add_argument('--hypo-n-half', dest='hypo_n_half', type=int)
        parser.add_argument('--hypo-L', dest='hypo_L', type=float)
        parser.add_argument('--epsilon', dest='entropy_epsilon', type=float, help='Modified-entropy weight.')
        parser.add_argument('--epsilon-sweep', default='', help='Extra epsilons for the dissipation bound.')

    def execute_run(self, config, directory, options):
        try:
            epsilons = tuple(float(e) for e in options['epsilon_sweep'].split(',') if e.strip())
        except ValueError:
            raise ConfigError(f"--epsilon-sweep expects comma-separated values, "
                              f"got {options['epsilon_sweep']!r}") from None
        return run_operators(config, directory, epsilons=epsilons)

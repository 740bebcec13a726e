from confinement.pipelines import run_stationary
from confinement.run_toolkit import ToolkitCommand


class Command(ToolkitCommand):
    help = 'Krein-Rutman power iteration for the Milne problem and assembly of the stationary state.'
    subcommand = 'stationary'
    config_overrides = ('epsilon', 'eigen_tol', 'eigen_max_iter', 'epsilon0', 'continuation_steps')

    def add_run_arguments(self, parser):
        parser.add_argument('--epsilon', type=float, help='Absorption regularization of the Milne solve.')
        parser.add_argument('--eigen-tol', dest='eigen_tol', type=float)
        parser.add_argument('--eigen-max-iter', dest='eigen_max_iter', type=int)
        parser.add_argument('--battery', type=int, default=10, help='Random inflows for the maximum principle.')
        parser.add_argument('--no-refine', action='store_true', help='Skip the refined eigenvalue solve.')
        parser.add_argument('--continuation', action='store_true',
                            help='Also solve the eigen-inflow by source iteration with decreasing absorption '
                                 'and report the gap to the direct solve.')
        parser.add_argument('--epsilon0', type=float)
        parser.add_argument('--continuation-steps', dest='continuation_steps', type=int)

    def execute_run(self, config, directory, options):
        return run_stationary(config, directory, refine=not options['no_refine'], battery=options['battery'],
                              continuation=options['continuation'])

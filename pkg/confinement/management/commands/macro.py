from confinement.config import MACRO_CHOICES
from confinement.pipelines import run_macro
from confinement.run_toolkit import ToolkitCommand


class Command(ToolkitCommand):
    help = 'Macroscopic models: diffusivity, drift-diffusion limits and the two-speed system.'
    subcommand = 'macro'
    config_overrides = ('variant', 't_end', 'cfl')

    def add_run_arguments(self, parser):
        parser.add_argument('--variant', choices=MACRO_CHOICES)
        parser.add_argument('--t-end', dest='t_end', type=float)
        parser.add_argument('--cfl', type=float)
        parser.add_argument('--compare-all', action='store_true',
                            help='Run every variant and compare tail slopes with the kinetic state.')

    def execute_run(self, config, directory, options):
        return run_macro(config, directory, compare_all=options['compare_all'])

from breathers.pipeline import run_solve

from ._common import PipelineCommand


class Command(PipelineCommand):
    help = 'Find a ground-state breather by the dual mountain-pass method and write all artifacts'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--out', help='Output directory (default: output.directory)')
        parser.add_argument('--sublattice', type=int, default=None,
                            help='Restrict to frequencies divisible by m (odd)')
        parser.add_argument('--allow-uncertified', action='store_true',
                            help='Continue when some frequencies cannot be certified')

    def run(self, config, options):
        report = run_solve(
            config,
            options['out'] or config.output['directory'],
            sublattice=options['sublattice'],
            allow_uncertified=options['allow_uncertified'],
        )
        self.stdout.write(self.style.SUCCESS(
            f"Converged: J = {report['J']:.10g}, c_mp = {report['c_mp']:.10g}, "
            f"wave residual {report['residuals']['wave']:.3e}"
        ))

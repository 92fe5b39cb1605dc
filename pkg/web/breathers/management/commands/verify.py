from breathers.pipeline import run_verify

from ._common import PipelineCommand


class Command(PipelineCommand):
    help = 'Recompute every residual of a stored solution'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--solution', required=True, help='Directory written by the solve command')
        parser.add_argument('--refine', type=int, default=None,
                            help='Also re-solve with n_points and k_max refined by this factor')
        parser.add_argument('--double-domain', action='store_true',
                            help='Also re-solve on a domain doubled with the same dx')

    def run(self, config, options):
        report = run_verify(
            config,
            options['solution'],
            refine=options['refine'],
            double_domain=options['double_domain'],
        )
        residuals = ', '.join(f"{name} {value:.3e}" for name, value in report['residuals'].items())
        self.stdout.write(self.style.SUCCESS(f"Residuals: {residuals}"))
        if 'refine' in report:
            self.stdout.write(f"Refined wave residual ratio {report['refine']['wave_ratio']:.3g}")
        if 'double_domain' in report:
            self.stdout.write(f"Doubled-domain energy change {report['double_domain']['energy_change']:.3e}")

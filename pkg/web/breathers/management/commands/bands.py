from breathers.pipeline import run_bands

from ._common import PipelineCommand


class Command(PipelineCommand):
    help = 'Compute the band structure and certify the gaps at omega^2 k^2'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--out', help='Output directory for bands.csv and bands.json (default: output.directory)')

    def run(self, config, options):
        bc, _ = run_bands(config, options['out'] or config.output['directory'])
        certified = ', '.join(str(k) for k in sorted(bc.gaps_at))
        self.stdout.write(self.style.SUCCESS(f"Certified frequencies: {certified}"))

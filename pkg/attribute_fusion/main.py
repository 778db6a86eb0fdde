"""Main module of the attribute-fusion command line.

Each command of ``attribute-fusion`` is one ``Main.cmd_*`` method taking the
parsed arguments. Pipeline stages run inside ``stage`` so that a failure is
reported with the name of the stage that raised it.
"""
import argparse
import logging
import sys
from contextlib import contextmanager
from functools import partial
from pathlib import Path

from attribute_fusion import log, settings
from attribute_fusion.ensemble import (METRIC_COLUMNS, calibrate_tau,
                                       compare_models, evaluate,
                                       predict_record, sweep, write_report)
from attribute_fusion.exceptions import (AttributeFusionException,
                                         StageError, ValidationException)
from attribute_fusion.ingest import (SyntheticConfig, file_digest,
                                     generate_synthetic, load_attribute_spec,
                                     load_labels, load_local_catalog,
                                     load_split, read_header, split_dataset,
                                     write_attribute_spec, write_labels,
                                     write_local_catalog, write_split)
from attribute_fusion.models import (AbstentionQueue, DatasetSplit,
                                     LabelSet, ModelBundle)
from attribute_fusion.scheduler import PredictionPool
from attribute_fusion.stats import pairwise_mutual_information, select_relevant
from attribute_fusion.storehouse import ModelStore
from attribute_fusion.tbn import (ORIENTATIONS, WeightedGraph, learn_cpts,
                                  max_spanning_tree, orient_tree,
                                  penalized_log_likelihood, training_columns,
                                  tree_to_string)


@contextmanager
def stage(name):
    """Re-raise library errors of a pipeline stage as StageError."""
    try:
        yield
    except StageError:
        raise
    except (AttributeFusionException, OSError) as exc:
        log.error('stage %s failed: %s', name, exc)
        raise StageError(name, str(exc)) from exc


class Main:
    """Entry point of the attribute-fusion commands."""

    def __init__(self, store=None, out=None):
        """Create the command runner.

        Args:
            store (ModelStore): where bundles and outputs are written.
            out: stream receiving the human-readable command output.

        """
        self.store = store or ModelStore()
        self.out = out or sys.stdout

    def _print(self, text):
        print(text, file=self.out)

    def _specs(self, paths):
        specs = {}
        for path in paths or []:
            spec = load_attribute_spec(path)
            specs[spec.name] = spec
        return specs

    def _labels(self, path, specs):
        header = read_header(path)
        attribute = header[1] if len(header) > 1 else None
        return load_labels(path, specs.get(attribute))

    def _split(self, args, catalog, labels):
        if getattr(args, 'split', None):
            return load_split(args.split)
        return split_dataset(catalog, labels, args.ratios, args.seed,
                             args.ordered_split)

    @staticmethod
    def _bundle_split(args, bundle):
        if getattr(args, 'split', None):
            return load_split(args.split)
        if 'split' not in bundle.provenance:
            raise ValidationException(
                'bundle has no split manifest; pass --split')
        return DatasetSplit.from_dict(bundle.provenance['split'])

    def cmd_generate(self, args):
        """Write a synthetic catalog with its labels, spec and network."""
        log.debug('cmd_generate %s', args.out)
        with stage('generate'):
            config = SyntheticConfig(
                nodes=args.nodes, states=args.states, samples=args.samples,
                noise=args.noise, seed=args.seed,
                descriptions=args.descriptions,
                local_noise=args.local_noise, strength=args.strength,
                target=args.target or 'G',
                sort_by_target=args.sort_by_target)
            catalog, labels, net = generate_synthetic(config)
        with stage('write'):
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            write_local_catalog(catalog, out / 'catalog.csv')
            write_labels(labels, out / 'labels.csv')
            write_attribute_spec(labels.spec, out / 'spec.txt')
            self.store.save_json(net.as_dict(), out / 'network.json')
        self._print(tree_to_string(net))
        log.debug('cmd_generate result %s', net)
        return catalog, labels, net

    def cmd_split(self, args):
        """Write a split manifest for a labeled catalog."""
        log.debug('cmd_split %s', args.catalog)
        with stage('ingest'):
            catalog = load_local_catalog(args.catalog)
            labels = self._labels(args.labels[0], self._specs(args.spec))
        with stage('split'):
            split = split_dataset(catalog, labels, args.ratios, args.seed,
                                  args.ordered_split)
            write_split(split, args.out)
        log.debug('cmd_split result %s', split)
        return split

    def train_one(self, args, catalog, labels_path, specs):
        """Learn one bundle for the attribute of one label file."""
        with stage('ingest'):
            labels = self._labels(labels_path, specs)
            split = self._split(args, catalog, labels)
        target = labels.attribute
        train_catalog = catalog.subset(
            [record_id for record_id in split.train if record_id in catalog])
        train_labels = labels.subset(split.train)

        with stage('select'):
            eta = args.eta
            if eta > len(catalog.schema):
                log.warning('eta=%d exceeds the %d characteristics, using %d',
                            eta, len(catalog.schema), len(catalog.schema))
                eta = len(catalog.schema)
            selected = select_relevant(train_catalog, train_labels,
                                       labels.spec, eta)
        with stage('graph'):
            nodes = selected + [target]
            columns = training_columns(train_catalog, train_labels, nodes,
                                       target)
            graph = WeightedGraph.from_weights(
                nodes, pairwise_mutual_information(columns))
        with stage('mst'):
            tree = max_spanning_tree(graph)
        with stage('orient'):
            scorer = partial(penalized_log_likelihood, columns=columns,
                             target=target, alpha=args.alpha,
                             fixed_states={target: labels.spec.states})
            parents = orient_tree(tree, target, args.orientation, scorer)
        with stage('cpt'):
            net = learn_cpts(parents, train_catalog, train_labels, args.alpha)

        provenance = {'catalog_sha256': file_digest(args.catalog),
                      'labels_sha256': file_digest(labels_path),
                      'seed': split.seed,
                      'ratios': list(split.ratios),
                      'ordered': split.ordered,
                      'split': split.as_dict()}
        return ModelBundle(spec=labels.spec, net=net,
                           characteristics=selected, eta=eta,
                           orientation=args.orientation,
                           ngram_max=args.ngram_max,
                           temperature=args.temperature, tau=args.tau,
                           lambda_pi=args.lambda_pi,
                           lambda_np=args.lambda_np, provenance=provenance)

    def cmd_train(self, args):
        """Learn bundles and print each learned tree."""
        log.debug('cmd_train %s %s', args.catalog, args.labels)
        with stage('ingest'):
            catalog = load_local_catalog(args.catalog)
            specs = self._specs(args.spec)
            paths = list(args.labels)
            if args.target:
                paths = [path for path in paths
                         if read_header(path)[1:] == [args.target]]
                if not paths:
                    raise ValidationException(
                        f'no label file for target {args.target}')
            elif len(paths) > 1 and not args.all_targets:
                raise ValidationException(
                    'several label files need --target or --all-targets')

        with PredictionPool(args.workers) as pool:
            bundles = pool.map_ordered(
                partial(self.train_one, args, catalog, specs=specs), paths)

        with stage('write'):
            for bundle in bundles:
                name = args.out
                if len(bundles) > 1:
                    name = Path(args.out) / f'{bundle.target}.json'
                self.store.save_bundle(bundle, name)
                self._print(tree_to_string(bundle.net))
        log.debug('cmd_train result %s', bundles)
        return bundles

    def _predict(self, bundle, records, tau, workers):
        with stage('predict'), PredictionPool(workers) as pool:
            return pool.map_ordered(
                partial(predict_record, bundle, tau=tau), records)

    @staticmethod
    def _check_schema(bundle, catalog):
        missing = [name for name in bundle.characteristics
                   if name not in catalog.schema]
        if missing:
            raise ValidationException(
                f'catalog lacks characteristics {", ".join(missing)}')

    def cmd_predict(self, args):
        """Write committed predictions and the abstention queue."""
        log.debug('cmd_predict %s %s', args.bundle, args.catalog)
        with stage('ingest'):
            bundle = self.store.load_bundle(args.bundle)
            catalog = load_local_catalog(args.catalog)
            self._check_schema(bundle, catalog)
            tau = bundle.tau if args.tau is None else args.tau
        outcomes = self._predict(bundle, list(catalog), tau, args.workers)
        with stage('write'):
            queue = AbstentionQueue.from_outcomes(outcomes, catalog,
                                                  bundle.spec)
            self.store.save_predictions(outcomes, bundle.spec,
                                        args.predictions)
            self.store.save_queue(queue, args.queue)
        log.info('%d predicted, %d routed to annotation',
                 len(outcomes) - len(queue), len(queue))
        log.debug('cmd_predict result %s', queue)
        return outcomes, queue

    def _labeled_outcomes(self, args, default_part):
        with stage('ingest'):
            bundle = self.store.load_bundle(args.bundle)
            catalog = load_local_catalog(args.catalog)
            self._check_schema(bundle, catalog)
            labels = load_labels(args.labels, bundle.spec)
            split = self._bundle_split(args, bundle)
            part = args.part or default_part
            records = [catalog.get(record_id)
                       for record_id in split.part(part)
                       if record_id in catalog and record_id in labels]
            if not records:
                raise ValidationException(f'no labeled records in {part}')
        # CoP is re-thresholded later, so predict at tau=0
        outcomes = self._predict(bundle, records, 0.0, args.workers)
        return bundle, outcomes, labels

    def cmd_calibrate(self, args):
        """Calibrate tau and write a bundle carrying it."""
        log.debug('cmd_calibrate %s', args.bundle)
        bundle, outcomes, labels = self._labeled_outcomes(args, 'validation')
        with stage('calibrate'):
            report = calibrate_tau(outcomes, labels, args.lambda_pi,
                                   args.lambda_np, args.step)
        with stage('write'):
            if args.report:
                write_report(report.rows, args.report)
            calibrated = bundle.update(tau=report.selected_tau,
                                       lambda_pi=args.lambda_pi,
                                       lambda_np=args.lambda_np)
            self.store.save_bundle(calibrated, args.out)
        self._print(f'tau={report.selected_tau:.2f}')
        log.debug('cmd_calibrate result %s', report)
        return report

    def cmd_evaluate(self, args):
        """Report accuracy and category percentages at one threshold."""
        log.debug('cmd_evaluate %s', args.bundle)
        bundle, outcomes, labels = self._labeled_outcomes(args, 'test')
        tau = bundle.tau if args.tau is None else args.tau
        with stage('evaluate'):
            if args.compare:
                results = compare_models(outcomes, labels, tau)
            else:
                results = {'ensemble': evaluate(outcomes, labels, tau)}
        rows = [dict(metrics.as_dict(), model=name)
                for name, metrics in results.items()]
        with stage('write'):
            if args.report:
                write_report(rows, args.report, METRIC_COLUMNS)
        for name, metrics in results.items():
            self._print(f'{name}: accuracy={metrics.overall_accuracy:.4f} '
                        f'{metrics!r}')
        log.debug('cmd_evaluate result %s', results)
        return results

    def cmd_sweep(self, args):
        """Write the category percentages for every grid threshold."""
        log.debug('cmd_sweep %s', args.bundle)
        bundle, outcomes, labels = self._labeled_outcomes(args, 'validation')
        with stage('sweep'):
            rows = sweep(outcomes, labels, args.step, bundle.lambda_pi,
                         bundle.lambda_np)
        with stage('write'):
            write_report(rows, args.report)
        log.debug('cmd_sweep result %d rows', len(rows))
        return rows

    def cmd_annotate(self, args):
        """Merge an annotated abstention queue into a label file."""
        log.debug('cmd_annotate %s', args.queue)
        with stage('ingest'):
            specs = self._specs(args.spec)
            queue = self.store.load_queue(args.queue)
            if Path(args.labels[0]).exists():
                labels = self._labels(args.labels[0], specs)
                spec = labels.spec
                merged = dict(labels.items())
            else:
                if not args.target or args.target not in specs:
                    raise ValidationException(
                        'a new label file needs --target and its --spec')
                spec = specs[args.target]
                merged = {}
        with stage('annotate'):
            annotations = queue.annotations()
            for record_id, label in annotations.items():
                if merged.get(record_id) not in (None, label):
                    log.warning('annotation of %s replaces label %s',
                                record_id, merged[record_id])
                merged[record_id] = label
            labels = LabelSet(spec, merged)
        with stage('write'):
            write_labels(labels, args.out)
        log.info('merged %d annotations', len(annotations))
        log.debug('cmd_annotate result %s', labels)
        return labels

    def cmd_fuse(self, args):
        """Write the catalog with the predicted attribute as a column."""
        log.debug('cmd_fuse %s %s', args.bundle, args.catalog)
        with stage('ingest'):
            bundle = self.store.load_bundle(args.bundle)
            catalog = load_local_catalog(args.catalog)
            self._check_schema(bundle, catalog)
            if bundle.target in catalog.schema:
                raise ValidationException(
                    f'catalog already has a {bundle.target} column')
            tau = bundle.tau if args.tau is None else args.tau
        outcomes = self._predict(bundle, list(catalog), tau, args.workers)
        fused = {outcome.record_id: bundle.spec.states[outcome.predicted]
                 for outcome in outcomes if not outcome.abstained}
        with stage('write'):
            write_local_catalog(catalog, args.out, (bundle.target, fused))
        log.debug('cmd_fuse result %d of %d fused', len(fused), len(catalog))
        return fused


def _ratios(text):
    try:
        ratios = tuple(float(part) for part in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid ratios {text!r}') from None
    if len(ratios) != 3:
        raise argparse.ArgumentTypeError('ratios need three fractions')
    return ratios


def _states(text):
    counts = [int(part) for part in text.split(',')]
    return counts[0] if len(counts) == 1 else counts


def build_parser():
    """Return the argument parser of the attribute-fusion command."""
    parser = argparse.ArgumentParser(
        prog='attribute-fusion',
        description='Predict global product attributes of local catalogs.')
    parser.add_argument('--verbose', action='store_true')
    parser.add_argument('--quiet', action='store_true')
    commands = parser.add_subparsers(dest='command', required=True)

    def command(name, help_text):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument('--workers', type=int, default=settings.WORKERS)
        sub.add_argument('--seed', type=int, default=settings.SEED)
        return sub

    def inputs(sub, labeled=True):
        sub.add_argument('--catalog', required=True)
        if labeled:
            sub.add_argument('--labels', required=True, action='append')
        sub.add_argument('--spec', action='append')

    def splitting(sub):
        sub.add_argument('--ratios', type=_ratios,
                         default=settings.SPLIT_RATIOS)
        sub.add_argument('--ordered-split', action='store_true')

    def bundled(sub, default_part=None):
        sub.add_argument('--bundle', required=True)
        sub.add_argument('--catalog', required=True)
        if default_part:
            sub.add_argument('--labels', required=True)
            sub.add_argument('--split')
            sub.add_argument('--part', choices=DatasetSplit.parts)

    sub = command('generate', 'write a synthetic catalog')
    sub.add_argument('--out', required=True)
    sub.add_argument('--target')
    sub.add_argument('--nodes', type=int, default=6)
    sub.add_argument('--states', type=_states, default=3)
    sub.add_argument('--samples', type=int, default=1000)
    sub.add_argument('--noise', type=float, default=0.1)
    sub.add_argument('--local-noise', type=float, default=0.0)
    sub.add_argument('--descriptions', type=int, default=3)
    sub.add_argument('--strength', type=float, default=0.6)
    sub.add_argument('--sort-by-target', action='store_true')

    sub = command('split', 'write a train/validation/test manifest')
    inputs(sub)
    splitting(sub)
    sub.add_argument('--out', required=True)

    sub = command('train', 'learn model bundles')
    inputs(sub)
    splitting(sub)
    sub.add_argument('--out', required=True)
    sub.add_argument('--split')
    sub.add_argument('--target')
    sub.add_argument('--all-targets', action='store_true')
    sub.add_argument('--eta', type=int, default=settings.ETA)
    sub.add_argument('--alpha', type=float, default=settings.ALPHA)
    sub.add_argument('--orientation', choices=ORIENTATIONS,
                     default=settings.ORIENTATION)
    sub.add_argument('--ngram-max', type=int, default=settings.NGRAM_MAX)
    sub.add_argument('--temperature', type=float,
                     default=settings.TEMPERATURE)
    sub.add_argument('--tau', type=float, default=settings.TAU)
    sub.add_argument('--lambda-pi', type=float, default=settings.LAMBDA_PI)
    sub.add_argument('--lambda-np', type=float, default=settings.LAMBDA_NP)

    sub = command('predict', 'predict a catalog')
    bundled(sub)
    sub.add_argument('--tau', type=float)
    sub.add_argument('--predictions', default='predictions.csv')
    sub.add_argument('--queue', default='abstentions.csv')

    sub = command('calibrate', 'calibrate the abstention threshold')
    bundled(sub, 'validation')
    sub.add_argument('--out', required=True)
    sub.add_argument('--report')
    sub.add_argument('--lambda-pi', type=float, default=settings.LAMBDA_PI)
    sub.add_argument('--lambda-np', type=float, default=settings.LAMBDA_NP)
    sub.add_argument('--step', type=float, default=settings.TAU_STEP)

    sub = command('evaluate', 'evaluate a bundle on a split')
    bundled(sub, 'test')
    sub.add_argument('--tau', type=float)
    sub.add_argument('--compare', action='store_true')
    sub.add_argument('--report')

    sub = command('sweep', 'tabulate categories over thresholds')
    bundled(sub, 'validation')
    sub.add_argument('--step', type=float, default=settings.TAU_STEP)
    sub.add_argument('--report', required=True)

    sub = command('annotate', 'merge annotations into a label file')
    sub.add_argument('--queue', required=True)
    sub.add_argument('--labels', required=True, action='append')
    sub.add_argument('--spec', action='append')
    sub.add_argument('--target')
    sub.add_argument('--out', required=True)

    sub = command('fuse', 'write the catalog with the predicted column')
    bundled(sub)
    sub.add_argument('--tau', type=float)
    sub.add_argument('--out', required=True)
    return parser


def main(argv=None, runner=None):
    """Run one command; return the process exit code."""
    args = build_parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.ERROR
    logging.basicConfig(
        level=level,
        format='%(asctime)s %(levelname)s %(name)s %(message)s')

    runner = runner or Main()
    handler = getattr(runner, f'cmd_{args.command}')
    try:
        handler(args)
    except StageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except AttributeFusionException as exc:
        print(f'error: {exc}', file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())

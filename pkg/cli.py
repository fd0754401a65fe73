#!/usr/bin/env python3
"""
OHSL - Online hashing with similarity learning
Command-line entry point: train hash functions, stream, query, evaluate, benchmark
"""

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config import apply_overrides, load_config
from src.engine import Engine, default_schedule
from src.errors import (
    EXIT_DATA,
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    CompatibilityError,
    DataError,
    DimensionError,
    OHSLError,
)
from src.eval_bench import (
    BITS_GRID,
    RetrievalEvaluator,
    StreamConfig,
    compare_variants,
    run_stream,
    synth_dataset,
    synth_from_config,
    update_cost_profile,
    write_cost_tsv,
    write_report_tsv,
    write_timeline_jsonl,
    write_timeline_tsv,
)
from src.formats import (
    load_database,
    load_hash_model,
    load_similarity_model,
    read_features,
    read_labels,
    save_database,
    save_hash_model,
    save_similarity_model,
)
from src.hash_core import BinaryCode, encode_batch
from src.manifest import RunManifest
from src.multi_index import build_multi_index, multi_index_search
from src.online_learner import SimilaritySnapshot
from src.search import hamming_topk, linear_scan_topk, query_weights, symmetric_query_weights


ENGINES = ('scan', 'multi-index', 'hamming', 'sym')
QUERY_HEADER = 'query\trank\tid\tscore'


def status(message: str) -> None:
    """Progress lines go to stderr; stdout carries results only"""
    print(message, file=sys.stderr)


def non_negative(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {number}")
    return number


def positive(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {number}")
    return number


def _finish(manifest: RunManifest, engine: Engine) -> None:
    for path in manifest.write_all(engine.audit_log):
        status(f"✓ Manifest: {path}")


# === Models for query/eval ===

def _search_settings(args, config: Dict[str, Any]) -> Dict[str, Any]:
    """Engine, k and substrings: flags first, then the search section"""
    search = apply_overrides(
        config, 'search',
        engine=args.engine, k=args.k, substrings=getattr(args, 'substrings', None)
    )['search']
    engine = search.get('engine', 'scan')
    if engine not in ENGINES:
        raise ValueError(f"search.engine must be one of {', '.join(ENGINES)}, got '{engine}'")
    k = search.get('k', 10)
    if k is None or int(k) < 0:
        raise ValueError(f"search.k must be >= 0, got {k}")
    args.engine = engine
    args.k = int(k)
    args.substrings = search.get('substrings')
    return search


def _load_engine_models(args, db_bits: int, query_dim: int):
    """Load and cross-check the models an engine needs"""
    sim_model = codebook = hash_model = None

    if args.engine in ('scan', 'multi-index', 'sym'):
        if not args.sim_model:
            raise CompatibilityError(f"engine '{args.engine}' needs --sim-model")
        sim_model, codebook = load_similarity_model(args.sim_model)
        if sim_model.b != db_bits:
            raise CompatibilityError(f"similarity model has b={sim_model.b}, database holds {db_bits}-bit codes")

    if args.engine in ('hamming', 'sym'):
        if not args.hash_model:
            raise CompatibilityError(f"engine '{args.engine}' needs --hash-model to encode queries")
        hash_model = load_hash_model(args.hash_model)
        if hash_model.bits != db_bits:
            raise CompatibilityError(f"hash model emits {hash_model.bits} bits, database holds {db_bits}-bit codes")
        if hash_model.dim != query_dim:
            raise CompatibilityError(f"hash model expects dimension {hash_model.dim}, queries have {query_dim}")

    if args.engine in ('scan', 'multi-index'):
        if sim_model.variant != 'asymmetric':
            raise CompatibilityError(f"engine '{args.engine}' needs an asymmetric similarity model")
        if sim_model.D != query_dim:
            raise CompatibilityError(f"similarity model expects dimension {sim_model.D}, queries have {query_dim}")
    elif args.engine == 'sym' and sim_model.variant != 'symmetric':
        raise CompatibilityError("engine 'sym' needs a square (symmetric) similarity model")

    return sim_model, hash_model


# === Commands ===

def cmd_init_hash(args, config: Dict[str, Any]) -> int:
    config = apply_overrides(
        config, 'hash',
        bits=args.bits, init_sample=args.sample, seed=args.seed, iterations=args.iterations
    )
    engine = Engine(config)

    features = read_features(args.features)
    status(f"✓ Read {features.shape[0]} x {features.shape[1]} features")

    model = engine.train_hash(features)
    save_hash_model(model, args.out)
    status(f"✓ Hash model ({model.dim} -> {model.bits} bits) written to {args.out}")

    manifest = RunManifest('init-hash', config, seeds={'hash': engine.seed})
    manifest.add_input(args.features, 'features')
    manifest.add_output(args.out, 'hash_model')
    _finish(manifest, engine)
    return EXIT_OK


def cmd_stream(args, config: Dict[str, Any]) -> int:
    config = apply_overrides(config, 'hash', seed=args.seed)
    config = apply_overrides(
        config, 'learner',
        C=args.C, l_mult=args.l_mult, pa_norm_exponent=args.pa_norm_exponent, variant=args.variant
    )
    config = apply_overrides(
        config, 'stream',
        chunk_size=args.chunk, eval_every=args.eval_every, workers=args.workers,
        simulate_io=True if args.simulate_io else None
    )
    engine = Engine(config)

    features = read_features(args.features)
    labels = read_labels(args.labels)
    if not labels:
        raise DataError(f"{args.labels}: label file is empty")
    if len(labels) != features.shape[0]:
        raise DimensionError(f"{features.shape[0]} feature rows but {len(labels)} label lines")

    hash_model = load_hash_model(args.hash_model)
    if hash_model.dim != features.shape[1]:
        raise CompatibilityError(f"hash model expects dimension {hash_model.dim}, features have {features.shape[1]}")

    evaluator = None
    if args.queries:
        if not args.query_labels:
            raise DataError("--queries needs --query-labels")
        queries = read_features(args.queries)
        query_labels = read_labels(args.query_labels)
        if queries.shape[1] != hash_model.dim:
            raise CompatibilityError(f"queries have dimension {queries.shape[1]}, hash model expects {hash_model.dim}")
        evaluator = RetrievalEvaluator(
            queries, query_labels, hash_model,
            topk=config['stream'].get('eval_topk'),
            workers=config['stream'].get('workers', 4),
            debugger=engine.debugger
        )

    stream_config = config['stream']
    schedule = default_schedule(features.shape[0], stream_config['chunk_size'], stream_config.get('eval_every'))
    result = engine.stream(features, labels, hash_model, evaluator=evaluator, eval_schedule=schedule)

    save_similarity_model(result.model, result.codebook, args.out_sim)
    save_database(result.database, args.out_db)
    status(f"✓ Similarity model (l={result.model.l}, {result.model.update_count} updates) written to {args.out_sim}")
    status(f"✓ Database ({len(result.database)} codes) written to {args.out_db}")

    manifest = RunManifest('stream', config, seeds={'codebook': engine.seed})
    manifest.add_input(args.features, 'features')
    manifest.add_input(args.labels, 'labels')
    manifest.add_input(args.hash_model, 'hash_model')
    manifest.add_output(args.out_sim, 'similarity_model')
    manifest.add_output(args.out_db, 'database')

    if args.metrics:
        write_timeline_jsonl(result.state.checkpoints, args.metrics)
        manifest.add_output(args.metrics, 'metrics')
        status(f"✓ Metrics timeline written to {args.metrics}")
    if args.metrics_tsv:
        write_timeline_tsv(result.state.checkpoints, args.metrics_tsv)
        manifest.add_output(args.metrics_tsv, 'metrics_tsv')

    if result.state.skipped_points:
        status(f"❌ Skipped {len(result.state.skipped_points)} points that could not drive an update")
    status(result.state.summary())
    _finish(manifest, engine)
    return EXIT_OK


def cmd_query(args, config: Dict[str, Any]) -> int:
    _search_settings(args, config)
    engine = Engine(config)
    db = load_database(args.db)
    queries = read_features(args.queries)
    sim_model, hash_model = _load_engine_models(args, db.bits, queries.shape[1])

    lines: List[str] = []
    if args.k > 0:
        lines.append(QUERY_HEADER)
        snapshot = db.snapshot()
        index = build_multi_index(db, args.substrings) if args.engine == 'multi-index' else None
        query_codes = encode_batch(hash_model, queries) if hash_model is not None else None

        for i, q in enumerate(queries):
            probed = None
            if args.engine == 'scan':
                hits = linear_scan_topk(query_weights(sim_model.M, q), snapshot, args.k)
            elif args.engine == 'multi-index':
                found = multi_index_search(index, query_weights(sim_model.M, q), args.k)
                hits, probed = found.hits, found.probed
            elif args.engine == 'hamming':
                hits = hamming_topk(BinaryCode(query_codes[i], db.bits), snapshot, args.k)
            else:
                code = BinaryCode(query_codes[i], db.bits)
                hits = linear_scan_topk(symmetric_query_weights(sim_model.M, code), snapshot, args.k)

            engine.debugger.query_done(args.engine, i, len(hits), probed)
            lines.extend(f"{i}\t{rank}\t{record_id}\t{value!r}" for rank, (record_id, value) in enumerate(hits, 1))

    text = ''.join(line + '\n' for line in lines)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding='utf-8')
        manifest = RunManifest('query', config)
        manifest.add_input(args.db, 'database')
        manifest.add_input(args.queries, 'queries')
        manifest.add_output(args.out, 'results')
        _finish(manifest, engine)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args, config: Dict[str, Any]) -> int:
    _search_settings(args, config)
    engine = Engine(config)
    db = load_database(args.db)
    queries = read_features(args.queries)
    query_labels = read_labels(args.query_labels)
    if len(query_labels) != queries.shape[0]:
        raise DimensionError(f"{queries.shape[0]} queries but {len(query_labels)} label lines")

    sim_model, hash_model = _load_engine_models(args, db.bits, queries.shape[1])
    evaluator = RetrievalEvaluator(
        queries, query_labels, hash_model,
        topk=args.k or None,
        workers=config.get('stream', {}).get('workers', 4),
        hamming_baseline=args.engine == 'hamming',
        debugger=engine.debugger
    )
    model = None
    if sim_model is not None and args.engine != 'hamming':
        model = SimilaritySnapshot(sim_model.M, sim_model.update_count, sim_model.variant)

    outcome = evaluator(db.snapshot(), model)
    value = outcome['map_hamming'] if args.engine == 'hamming' else outcome['map']
    report = {
        'engine': args.engine,
        'k': args.k or None,
        'queries': len(query_labels),
        'queries_evaluated': outcome['queries'],
        'database_size': len(db),
        'map': value,
    }

    text = json.dumps(report, indent=2) + '\n'
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding='utf-8')
        manifest = RunManifest('eval', config)
        manifest.add_input(args.db, 'database')
        manifest.add_input(args.queries, 'queries')
        manifest.add_input(args.query_labels, 'query_labels')
        manifest.add_output(args.out, 'report')
        _finish(manifest, engine)
    else:
        sys.stdout.write(text)

    shown = f"{value:.4f}" if value is not None else "n/a"
    status(f"✓ mAP ({args.engine}): {shown} over {outcome['queries']} queries")
    return EXIT_OK


def cmd_bench(args, config: Dict[str, Any]) -> int:
    config = apply_overrides(
        config, 'bench',
        points=args.points, num_classes=args.classes, dim=args.dim, seed=args.seed
    )
    config = apply_overrides(config, 'hash', bits=args.bits, seed=args.seed)
    config = apply_overrides(config, 'stream', chunk_size=args.chunk)
    engine = Engine(config)
    stream_config = StreamConfig.from_config(config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = RunManifest(f"bench {args.mode}", config, seeds={'bench': config['bench']['seed']})
    started = time.time()

    if args.mode == 'cost':
        points = args.chunks * stream_config.chunk_size
        bench = config['bench']
        dataset = synth_dataset(
            bench['num_classes'], bench['dim'], points,
            bench['labels_per_point'], bench['noise'], bench['seed']
        )
        profile = update_cost_profile(stream_config, dataset, debugger=engine.debugger)
        tsv_path = str(out_dir / 'cost.tsv')
        json_path = str(out_dir / 'cost.json')
        write_cost_tsv(profile, tsv_path)
        Path(json_path).write_text(json.dumps({
            'chunks': len(profile),
            'chunk_size': stream_config.chunk_size,
            'mean_ms': profile.mean_ms,
            'slope_ms_per_chunk': profile.slope_ms_per_chunk,
            'intercept_ms': profile.intercept_ms,
            'relative_slope': profile.relative_slope,
        }, indent=2) + '\n', encoding='utf-8')
        manifest.add_output(tsv_path, 'cost_tsv')
        manifest.add_output(json_path, 'cost_summary')
        status(f"✓ Per-chunk cost {profile.mean_ms:.2f} ms, slope {profile.slope_ms_per_chunk:.4f} ms/chunk")

    else:
        database, queries = synth_from_config(config)
        status(f"✓ Synthetic set: {len(database)} database points, {len(queries)} queries")

        if args.mode == 'stream':
            every = args.eval_every or stream_config.chunk_size
            schedule = list(range(0, len(database) + 1, every))
            if schedule[-1] != len(database):
                schedule.append(len(database))
            stream_config.eval_schedule = schedule
            result = run_stream(stream_config, database, queries, debugger=engine.debugger)

            jsonl_path = str(out_dir / 'timeline.jsonl')
            tsv_path = str(out_dir / 'timeline.tsv')
            write_timeline_jsonl(result.state.checkpoints, jsonl_path)
            write_timeline_tsv(result.state.checkpoints, tsv_path)
            manifest.add_output(jsonl_path, 'timeline')
            manifest.add_output(tsv_path, 'timeline_tsv')
            status(result.state.summary())
        else:
            bits_grid = None if args.bits_grid is None else (args.bits_grid or list(BITS_GRID))
            report = compare_variants(stream_config, database, queries, debugger=engine.debugger, bits_grid=bits_grid)
            tsv_path = str(out_dir / 'variants.tsv')
            json_path = str(out_dir / 'variants.json')
            write_report_tsv(report, tsv_path)
            Path(json_path).write_text(json.dumps(report.rows, indent=2) + '\n', encoding='utf-8')
            manifest.add_output(tsv_path, 'variants_tsv')
            manifest.add_output(json_path, 'variants')
            for row in report.rows:
                shown = f"{row['map']:.4f}" if row['map'] is not None else "n/a"
                status(f"  {row['group']:8s} {row['variant']:10s} b={row['bits']} C={row['C']} l={row['l']}: {shown}")

    engine.debugger.execution_complete(f"bench {args.mode}", time.time() - started)
    _finish(manifest, engine)
    return EXIT_OK


# === Parser ===

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ohsl',
        description='Online hashing with asymmetric similarity learning'
    )
    parser.add_argument('--config', help='Config JSON (default: config/config.json if present)')
    parser.add_argument('--debug', action='store_true', help='Print debug output to stderr')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('init-hash', help='Train PCA-ITQ hash functions on the initial sample')
    p.add_argument('features', help='Feature file (OHFV or CSV)')
    p.add_argument('--out', required=True, help='Output hash model (OHSL)')
    p.add_argument('--bits', type=positive, help='Code length b')
    p.add_argument('--sample', type=positive, help='Initial sample size (first rows of the file)')
    p.add_argument('--seed', type=non_negative, help='Seed of the initial rotation')
    p.add_argument('--iterations', type=non_negative, help='ITQ iterations')
    p.set_defaults(handler=cmd_init_hash)

    p = sub.add_parser('stream', help='Stream labeled points through the learner in chunks')
    p.add_argument('features', help='Feature file (OHFV or CSV), rows in arrival order')
    p.add_argument('labels', help='Label file, one comma-separated line per row')
    p.add_argument('--hash-model', required=True, help='Hash model from init-hash')
    p.add_argument('--out-sim', required=True, help='Output similarity model (OHSM)')
    p.add_argument('--out-db', required=True, help='Output code database (OHDB)')
    p.add_argument('--C', type=float, help='Aggressiveness bound (default 0.01)')
    p.add_argument('--l-mult', type=positive, help='Target code length as a multiple of b (default 3)')
    p.add_argument('--chunk', type=positive, help='Points per chunk (default 1000)')
    p.add_argument('--seed', type=non_negative, help='Seed of the target codebook')
    p.add_argument('--pa-norm-exponent', type=int, choices=(1, 2), help='Step size loss/||x||^p')
    p.add_argument('--variant', choices=('asymmetric', 'symmetric'), help='Similarity variant')
    p.add_argument('--queries', help='Query features evaluated at checkpoints')
    p.add_argument('--query-labels', help='Query labels')
    p.add_argument('--eval-every', type=positive, help='Checkpoint every N points (default: every chunk)')
    p.add_argument('--workers', type=positive, help='Threads evaluating queries at checkpoints')
    p.add_argument('--simulate-io', action='store_true', help='Add the modeled transfer cost to chunk records')
    p.add_argument('--metrics', help='Metrics timeline (JSON lines)')
    p.add_argument('--metrics-tsv', help='Metrics timeline (TSV)')
    p.set_defaults(handler=cmd_stream)

    for name, handler, help_text in (
        ('query', cmd_query, 'Retrieve top-k records per query as TSV'),
        ('eval', cmd_eval, 'Mean average precision of an engine'),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('db', help='Code database (OHDB)')
        p.add_argument('--queries', required=True, help='Query features (OHFV or CSV)')
        p.add_argument('--sim-model', help='Similarity model (OHSM)')
        p.add_argument('--hash-model', help='Hash model (OHSL), needed by hamming and sym')
        p.add_argument('--engine', choices=ENGINES, help='Search engine (default: search.engine, scan)')
        p.add_argument('--out', help='Output file (default: stdout)')
        if name == 'query':
            p.add_argument('--k', type=non_negative, help='Results per query, 0 for none (default: search.k)')
            p.add_argument('--substrings', type=positive, help='Multi-index substring count (default: search.substrings, else round(b/8))')
        else:
            p.add_argument('--query-labels', required=True, help='Query labels')
            p.add_argument('--k', type=non_negative, default=0, help='AP depth (0: full ranking)')
        p.set_defaults(handler=handler)

    p = sub.add_parser('bench', help='Synthetic streaming benchmarks')
    p.add_argument('mode', choices=('stream', 'compare', 'cost'))
    p.add_argument('--points', type=non_negative, help='Database points')
    p.add_argument('--classes', type=positive, help='Number of classes')
    p.add_argument('--dim', type=positive, help='Feature dimension')
    p.add_argument('--bits', type=positive, help='Code length b')
    p.add_argument('--seed', type=non_negative, help='Seed for data, hash and codebook')
    p.add_argument('--chunk', type=positive, help='Points per chunk')
    p.add_argument('--eval-every', type=positive, help='Checkpoint spacing for bench stream')
    p.add_argument('--chunks', type=positive, default=50, help='Chunks streamed by bench cost')
    p.add_argument('--bits-grid', type=positive, nargs='*',
                   help='bench compare: also sweep these code lengths (no values: 16 32 64 96)')
    p.add_argument('--out-dir', default='./data/bench', help='Output directory')
    p.set_defaults(handler=cmd_bench)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except FileNotFoundError as e:
        status(f"❌ {e}")
        return EXIT_USAGE
    except OHSLError as e:
        status(f"❌ Failed to load config: {e}")
        return e.exit_code

    if args.debug:
        config = apply_overrides(config, 'debug', enabled=True)

    try:
        return args.handler(args, config)
    except OHSLError as e:
        status(f"❌ {e}")
        return e.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        status(f"❌ {e}")
        return EXIT_DATA
    except ValueError as e:
        status(f"❌ Invalid argument: {e}")
        return EXIT_USAGE
    except Exception as e:
        status(f"❌ Unexpected error: {e}")
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())

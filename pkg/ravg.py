# -*- coding: utf-8 -*-
"""
ravg: regressão esparsa online a partir de médias correntes.

  python ravg.py accumulate dados.csv --snapshot m.ravg [--adapt 0.01]
  python ravg.py accumulate --merge a.ravg b.ravg --snapshot ab.ravg
  python ravg.py extract --snapshot m.ravg --method olsth --k 10 --out modelo.txt
  python ravg.py extract --snapshot m.ravg --method lasso --path 1..20
  python ravg.py simulate --p 20 --n 2000 --k 3 --out stream.csv
  python ravg.py experiment --table t2 --scale desk
  python ravg.py bounds --kind prop2 --n 4096 --p 1000 --lam 0.25
  python ravg.py inspect --snapshot m.ravg

Códigos de saída: 0 sucesso, 1 falha numérica, 2 erro de input.
"""
from __future__ import annotations
from pathlib import Path
import argparse
import logging
import re
import sys

import numpy as np
import pandas as pd

from services.errors import InvalidParameter, InvalidSparsity, RavgError
from services.evaluation import beta_min_bound, correlation_matrix
from services.experiments import EXPERIMENTS, SCALES, run_experiment, write_results
from services.extract import METHODS, extract_model, solution_path, write_model
from services.io_csv import iter_csv_batches, read_features_csv
from services.moments import (
    UNIFORM, exponential, merge, new_moments, read_snapshot_file, snapshot_lock, write_snapshot_file,
)
from services.simgen import GenConfig, SimStream, write_stream_csv
from services.standardize import standardize
from utils.timing import perf_table, timed
from utils.transform import fmt_num

logger = logging.getLogger("ravg")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _path_range(txt: str) -> list[int]:
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", txt or "")
    if not m:
        raise argparse.ArgumentTypeError(f"--path espera k1..k2 (recebido {txt!r})")
    a, b = int(m.group(1)), int(m.group(2))
    if not 1 <= a <= b:
        raise argparse.ArgumentTypeError(f"--path com limites inválidos: {a}..{b}")
    return list(range(a, b + 1))


def _rate(txt: str) -> float:
    v = float(txt)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"--adapt tem de estar em (0, 1) (recebido {v})")
    return v


def _positive_int(txt: str) -> int:
    v = int(txt)
    if v < 1:
        raise argparse.ArgumentTypeError(f"esperado inteiro ≥ 1 (recebido {v})")
    return v


# ---- accumulate ------------------------------------------------------------------------------------
def _check_mode(m, adapt: float | None) -> None:
    if adapt is None:
        return
    wanted = exponential(adapt)
    if m.mode != wanted:
        have = "uniform" if m.mode.is_uniform else f"exponential(α={m.mode.alpha:g})"
        raise InvalidParameter(f"--adapt {adapt:g} não bate com o modo do snapshot ({have})")


def cmd_accumulate(args) -> int:
    snap = Path(args.snapshot)
    merged = None
    for src in args.merge or []:
        other = read_snapshot_file(src)
        merged = other if merged is None else merge(merged, other)
        _log(f"[accumulate] + {src} (n={other.n})")

    source = args.input
    if source is None and not args.merge:
        source = "-"

    # lock durante todo o ler-atualizar-escrever
    with snapshot_lock(snap):
        m = None
        if source is not None:
            if snap.exists() and not args.merge:
                m = read_snapshot_file(snap)
                _check_mode(m, args.adapt)
                _log(f"[accumulate] a continuar {snap} (n={m.n}, p={m.p})")
            mode = exponential(args.adapt) if args.adapt else UNIFORM
            expected = m.p + 1 if m is not None else None
            with timed("accumulate", level=logging.INFO):
                for X, y in iter_csv_batches(source, expected_width=expected):
                    if m is None:
                        m = new_moments(X.shape[1], mode)
                    if m.mode.is_uniform:
                        m.update_batch(X, y)
                    else:
                        # adaptação é por observação
                        for x_i, y_i in zip(X, y):
                            m.update(x_i, y_i)
            if m is None:
                raise InvalidParameter("stream vazia: nenhuma observação lida")

        if merged is not None:
            m = merged if m is None else merge(merged, m)
        write_snapshot_file(m, snap, locked=True)
    _log(f"✔️ Escrevi {snap} (n={m.n}, p={m.p}, modo={m.mode.kind})")
    return 0


# ---- extract ----------------------------------------------------------------------------------------
def cmd_extract(args) -> int:
    if args.method in ("ofsa",) and args.k is None and args.path is None:
        raise InvalidSparsity("OFSA precisa de --k")
    if args.k is not None and args.k < 1:
        raise InvalidSparsity(f"k tem de ser ≥ 1 (recebido {args.k})")
    if args.lam is not None and not args.lam > 0:
        raise InvalidParameter(f"--lambda tem de ser > 0 (recebido {args.lam})")

    m = read_snapshot_file(args.snapshot)
    sm = standardize(m)
    kw = dict(ridge_lambda=args.ridge, T=args.T, mu=args.mu, eta=args.eta, l2_mix=args.l2_mix,
              b=args.b, iters=args.iters, grid_size=args.grid_size)

    if args.path is not None:
        df = solution_path(sm, args.method, args.path, n_jobs=args.jobs, **kw)
        if args.out:
            df.to_csv(args.out, index=False, float_format="%.17g")
            _log(f"✔️ Escrevi caminho de soluções em {args.out} ({len(df)} linhas)")
        else:
            df.to_csv(sys.stdout, index=False, float_format="%.17g")
        return 0

    with timed(f"extract {args.method}", level=logging.INFO):
        model = extract_model(sm, args.method, k=args.k, lam=args.lam, **kw)
    if model.warning:
        _log(f"⚠️ {model.warning}")
    text = write_model(model, args.out)
    if args.out:
        _log(f"✔️ Escrevi {args.out}")
    elif args.predict is None:
        sys.stdout.write(text)
    _log(f"[extract] {args.method}: k={model.size}, suporte={list(map(int, model.support))[:20]}"
         f", intercepto={fmt_num(model.intercept_orig, nd=4)}")

    if args.predict is not None:
        X = read_features_csv(args.predict, model.p)
        yhat = np.atleast_1d(model.predict(X))
        pd.DataFrame({"yhat": yhat}).to_csv(args.predictions or sys.stdout, index=False,
                                            float_format="%.17g")
        if args.predictions:
            _log(f"✔️ Escrevi {len(yhat)} previsões em {args.predictions}")
    return 0


# ---- simulate ----------------------------------------------------------------------------------------
def cmd_simulate(args) -> int:
    cfg = GenConfig(p=args.p, n=args.n, k_star=args.k, beta_strength=args.beta, alpha_corr=args.alpha,
                    task=args.task, seed=args.seed, spacing=args.spacing)
    st = SimStream(seed=args.seed, shard=args.shard, alpha_corr=args.alpha, noise=not args.noiseless)
    X, y = st.sample(cfg)
    if args.out and args.out != "-":
        write_stream_csv(X, y, args.out)
        _log(f"✔️ Escrevi {args.out} ({args.n}×{args.p}, tarefa={args.task})")
    else:
        write_stream_csv(X, y, sys.stdout)
    return 0


# ---- experiment --------------------------------------------------------------------------------------
def cmd_experiment(args) -> int:
    with timed(f"experiment {args.table}/{args.scale}", level=logging.INFO) as t:
        per_seed, summary = run_experiment(args.table, scale=args.scale, seeds=args.seeds,
                                           base_seed=args.seed, n_jobs=args.jobs)
    a, b = write_results(f"{args.table}_{args.scale}", per_seed, summary, args.out_dir)
    with pd.option_context("display.width", 160, "display.max_columns", 20):
        print(summary.to_string(index=False))
    _log(f"✔️ Escrevi {a} e {b} ({t.seconds:.1f} s)")
    return 0


# ---- bounds ------------------------------------------------------------------------------------------
def cmd_bounds(args) -> int:
    Sigma = correlation_matrix(args.p, args.corr) if args.corr is not None else None
    if args.kind == "prop2" and args.lam is None and Sigma is None:
        raise InvalidParameter("prop2 precisa de --lam ou --corr")
    val = beta_min_bound(args.kind, args.n, args.p, sigma=args.sigma, lam=args.lam, Sigma=Sigma,
                         alpha_exp=args.alpha_exp)
    print(repr(val))
    return 0


# ---- inspect -----------------------------------------------------------------------------------------
def cmd_inspect(args) -> int:
    m = read_snapshot_file(args.snapshot)
    print(f"p            {m.p}")
    print(f"n            {m.n}")
    print(f"modo         {m.mode.kind}" + (f" (α={m.mode.alpha:g})" if not m.mode.is_uniform else ""))
    print(f"n efetivo    {fmt_num(m.effective_n, nd=1)}")
    print(f"memória      {m.nbytes} bytes")
    if m.n >= 2:
        sm = standardize(m)
        print(f"retidas      {sm.r}")
        print(f"descartadas  {list(sm.dropped)}")
    return 0


# ---- parser ------------------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ravg", description="Regressão esparsa online por médias correntes")
    ap.add_argument("--verbose", "-v", action="store_true", help="logging DEBUG")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("accumulate", help="CSV (x1..xp,y) → snapshot")
    a.add_argument("input", nargs="?", default=None, help="CSV de entrada ('-' = stdin)")
    a.add_argument("--snapshot", required=True, help="ficheiro de snapshot (criado ou continuado)")
    a.add_argument("--adapt", type=_rate, default=None, help="taxa de adaptação α ∈ (0,1)")
    a.add_argument("--merge", nargs="+", default=None, metavar="SNAP", help="snapshots Uniform a juntar")
    a.set_defaults(func=cmd_accumulate)

    e = sub.add_parser("extract", help="snapshot → modelo esparso")
    e.add_argument("--snapshot", required=True)
    e.add_argument("--method", choices=METHODS, default="olsth")
    e.add_argument("--k", type=int, default=None)
    e.add_argument("--lambda", dest="lam", type=float, default=None)
    e.add_argument("--ridge", type=float, default=None, help="λ do ridge no passo 1 do OLS-th")
    e.add_argument("--T", type=_positive_int, default=100, help="iterações OFSA")
    e.add_argument("--mu", type=float, default=10.0, help="μ do escalonamento OFSA")
    e.add_argument("--eta", type=float, default=None, help="passo do gradiente")
    e.add_argument("--l2-mix", dest="l2_mix", type=float, default=0.5, help="termo L2 do elastic net")
    e.add_argument("--b", type=float, default=3.0, help="parâmetro b do MCP")
    e.add_argument("--iters", type=_positive_int, default=500)
    e.add_argument("--grid-size", dest="grid_size", type=int, default=200)
    e.add_argument("--path", type=_path_range, default=None, help="k1..k2: caminho de soluções em CSV")
    e.add_argument("--predict", default=None, help="CSV de features para prever")
    e.add_argument("--predictions", default=None, help="destino das previsões (default stdout)")
    e.add_argument("--out", default=None, help="ficheiro do modelo (default stdout)")
    e.add_argument("--jobs", type=_positive_int, default=None)
    e.set_defaults(func=cmd_extract)

    s = sub.add_parser("simulate", help="gera uma stream sintética em CSV")
    s.add_argument("--p", type=_positive_int, required=True)
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--k", type=int, required=True, help="k* (esparsidade verdadeira)")
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=1.0, help="correlação do desenho")
    s.add_argument("--task", choices=("regression", "classification"), default="regression")
    s.add_argument("--spacing", type=_positive_int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shard", type=int, default=0)
    s.add_argument("--noiseless", action="store_true")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    x = sub.add_parser("experiment", help="protocolos Monte Carlo → CSV")
    x.add_argument("--table", choices=EXPERIMENTS, required=True)
    x.add_argument("--scale", choices=SCALES, default="desk")
    x.add_argument("--seeds", type=_positive_int, default=None)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--jobs", type=_positive_int, default=None)
    x.add_argument("--out-dir", dest="out_dir", default=None)
    x.set_defaults(func=cmd_experiment)

    b = sub.add_parser("bounds", help="limite teórico para β_min")
    b.add_argument("--kind", choices=("prop2", "thm1"), required=True)
    b.add_argument("--n", type=_positive_int, required=True)
    b.add_argument("--p", type=_positive_int, required=True)
    b.add_argument("--sigma", type=float, default=1.0)
    b.add_argument("--lam", type=float, default=None)
    b.add_argument("--corr", type=float, default=None, help="α do desenho: Σ de correlação uniforme")
    b.add_argument("--alpha-exp", dest="alpha_exp", type=float, default=1.0)
    b.set_defaults(func=cmd_bounds)

    i = sub.add_parser("inspect", help="resumo de um snapshot")
    i.add_argument("--snapshot", required=True)
    i.set_defaults(func=cmd_inspect)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        code = args.func(args)
    except RavgError as e:
        _log(f"❌ {e}")
        return e.exit_code
    perf = perf_table()
    if args.verbose and not perf.empty:
        logger.debug("tempos por bloco:\n%s", perf.to_string(index=False))
    return code


if __name__ == "__main__":
    sys.exit(main())

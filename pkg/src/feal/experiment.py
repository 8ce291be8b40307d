"""FAL experiment orchestration: the R-round loop, ablation sweeps, and
report emission. Every output CSV carries the config echo and hash in its
header so reruns are verifiable and mixed run directories are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .data import Partition, domain_shift_report, generate_multidomain
from .evidential import alpha_from_logits, dirichlet_density_grid
from .federation import (
    ClientState,
    RoundLog,
    evaluate_global,
    fedavg_aggregate,
    local_train,
)
from .nn import ModelParams, forward, init_params, load_params, save_params
from .sampling import (
    QuerySet,
    RelaxationConfig,
    ablated_scores,
    annotate_query,
    baseline_select,
    ces_scores,
    diversity_relaxation,
    sort_by_score,
)

__all__ = [
    "SeedRunResult",
    "run_seed",
    "run_experiment",
    "run_ablation",
    "emit_reports",
    "ABLATION_AXES",
]

ABLATION_AXES = ("uncertainty_components", "tau", "n", "lambda", "loss")

LAMBDA_SWEEP = (1e-3, 5e-3, 1e-2, 5e-2, 1e-1)
TAU_SWEEP = (0.75, 0.8, 0.85, 0.9, 0.95)
N_SWEEP = (1, 3, 5, 10, 20)
# all seven on/off combinations of (epi_global, ale_global, ale_local)
COMPONENT_ROWS = (
    (False, True, False),
    (False, False, True),
    (False, True, True),
    (True, False, False),
    (True, True, False),
    (True, False, True),
    (True, True, True),
)


@dataclass
class SeedRunResult:
    seed: int
    metrics_rows: list[dict] = field(default_factory=list)
    round_logs: list[RoundLog] = field(default_factory=list)
    audit_rows: list[dict] = field(default_factory=list)
    final_global: ModelParams | None = None
    partitions: list[Partition] = field(default_factory=list)
    clients: list[ClientState] = field(default_factory=list)


def _make_clients(partitions: list[Partition], budget: int) -> list[ClientState]:
    clients = []
    for k, part in enumerate(partitions):
        n = part.train_features.shape[0]
        clients.append(
            ClientState(
                client_id=k,
                features=part.train_features,
                labels=part.train_labels,
                labeled=set(),
                unlabeled=set(range(n)),
                budget=budget,
            )
        )
    return clients


def _select_query(
    cfg: ExperimentConfig,
    client: ClientState,
    global_model: ModelParams,
    seed: int,
    fal_round: int,
    components: tuple[bool, bool, bool],
) -> QuerySet:
    strategy = cfg.strategy
    if strategy != "feal":
        sel_seed = int(np.random.default_rng([seed, fal_round, client.client_id, 7]).integers(2**31))
        return baseline_select(
            strategy, client, global_model, client.local_model, cfg.budget, sel_seed
        )
    unlabeled = sorted(client.unlabeled)
    x = client.features[np.array(unlabeled, dtype=int)]
    triples = ces_scores(x, global_model, client.local_model)
    raw = ablated_scores(triples, *components)
    scores = {idx: float(raw[row]) for row, idx in enumerate(unlabeled)}
    emb_rows = forward(client.local_model, x).embedding
    embeddings = {idx: emb_rows[row] for row, idx in enumerate(unlabeled)}
    candidates = sort_by_score(unlabeled, scores)
    return diversity_relaxation(
        candidates,
        scores,
        embeddings,
        cfg.budget,
        RelaxationConfig(similarity_threshold=cfg.tau, min_neighbors=cfg.min_neighbors),
    )


def run_seed(
    cfg: ExperimentConfig,
    seed: int,
    components: tuple[bool, bool, bool] = (True, True, True),
) -> SeedRunResult:
    """One full FAL run for one seed: annotate, federate, select, repeat."""
    partitions = generate_multidomain(
        cfg.n_clients,
        cfg.n_classes,
        cfg.dim,
        cfg.shift_strength,
        seed,
        samples_per_client=cfg.samples_per_client,
    )
    clients = _make_clients(partitions, cfg.budget)
    test_sets = [(p.test_features, p.test_labels) for p in partitions]
    arch = (cfg.dim, cfg.hidden, cfg.hidden, cfg.n_classes)
    global_model = init_params(arch, seed)
    for client in clients:
        client.local_model = global_model

    result = SeedRunResult(seed=seed, partitions=partitions, clients=clients)

    for fal_round in range(1, cfg.fal_rounds + 1):
        # annotation phase: round 1 is always random
        for client in clients:
            if fal_round == 1:
                sel_seed = int(
                    np.random.default_rng([seed, fal_round, client.client_id, 7]).integers(2**31)
                )
                query = baseline_select(
                    "random", client, global_model, global_model, cfg.budget, sel_seed
                )
                strategy_used = "random_init"
            else:
                query = _select_query(cfg, client, global_model, seed, fal_round, components)
                strategy_used = cfg.strategy
            annotate_query(client, query)
            for idx, score in zip(query.indices, query.scores):
                result.audit_rows.append(
                    {
                        "fal_round": fal_round,
                        "client_id": client.client_id,
                        "sample_index": idx,
                        "score": score,
                        "strategy": strategy_used,
                    }
                )

        # federated training phase
        for comm_round in range(1, cfg.comm_rounds + 1):
            entries = []
            losses = {}
            for client in clients:
                n_labeled = len(client.labeled)
                steps = cfg.local_epochs * max(1, -(-n_labeled // cfg.batch_size))
                rng = np.random.default_rng([seed, fal_round, comm_round, client.client_id])
                params, loss = local_train(
                    client,
                    global_model,
                    steps=steps,
                    lam=cfg.lam,
                    lr=cfg.lr,
                    batch_size=cfg.batch_size,
                    weight_decay=cfg.weight_decay,
                    rng=rng,
                )
                entries.append((params, float(n_labeled)))
                losses[client.client_id] = loss
            global_model = fedavg_aggregate(entries)
            metrics = evaluate_global(global_model, test_sets)
            result.round_logs.append(
                RoundLog(
                    fal_round=fal_round,
                    comm_round=comm_round,
                    client_losses=losses,
                    global_acc=metrics["accuracy"],
                    global_bma=metrics["bma"],
                )
            )

        metrics = evaluate_global(global_model, test_sets)
        result.metrics_rows.append(
            {
                "seed": seed,
                "fal_round": fal_round,
                "labeled_total": sum(len(c.labeled) for c in clients),
                "strategy": cfg.strategy,
                "global_acc": metrics["accuracy"],
                "global_bma": metrics["bma"],
            }
        )

    result.final_global = global_model
    return result


def _write_csv(path, cfg: ExperimentConfig, columns: list[str], rows: list[dict]):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg.config_hash()}\n")
        for line in cfg.to_text().strip().splitlines():
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _read_csv(path) -> tuple[str, list[str], list[dict]]:
    cfg_hash = None
    columns = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# config_hash="):
                cfg_hash = line.split("=", 1)[1]
                continue
            if line.startswith("#"):
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append(dict(zip(columns, line.split(","))))
    if cfg_hash is None or columns is None:
        raise ValueError(f"{path} is missing its config-hash header")
    return cfg_hash, columns, rows


def run_experiment(cfg: ExperimentConfig, seed_override: tuple[int, ...] | None = None) -> str:
    """Run all seeds for the configured strategy; returns the run directory."""
    seeds = seed_override or cfg.seeds
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())

    metrics_rows, log_rows, audit_rows = [], [], []
    for seed in seeds:
        res = run_seed(cfg, seed)
        metrics_rows.extend(res.metrics_rows)
        for rl in res.round_logs:
            for cid, loss in sorted(rl.client_losses.items()):
                log_rows.append(
                    {
                        "seed": seed,
                        "fal_round": rl.fal_round,
                        "comm_round": rl.comm_round,
                        "client_id": cid,
                        "train_loss": loss,
                        "global_acc": rl.global_acc,
                        "global_bma": rl.global_bma,
                    }
                )
        for row in res.audit_rows:
            audit_rows.append({"seed": seed, **row})
        save_params(res.final_global, os.path.join(out, f"model_seed{seed}.txt"))

    _write_csv(
        os.path.join(out, "metrics.csv"),
        cfg,
        ["seed", "fal_round", "labeled_total", "strategy", "global_acc", "global_bma"],
        metrics_rows,
    )
    _write_csv(
        os.path.join(out, "rounds.csv"),
        cfg,
        ["seed", "fal_round", "comm_round", "client_id", "train_loss", "global_acc", "global_bma"],
        log_rows,
    )
    _write_csv(
        os.path.join(out, "selection_audit.csv"),
        cfg,
        ["seed", "fal_round", "client_id", "sample_index", "score", "strategy"],
        audit_rows,
    )
    return out


def run_ablation(cfg: ExperimentConfig, axis: str) -> str:
    """Sweep one axis holding everything else fixed; writes comparison.csv."""
    if axis not in ABLATION_AXES:
        raise ValueError(f"unknown ablation axis {axis!r}; expected one of {ABLATION_AXES}")
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)

    variants: list[tuple[str, ExperimentConfig, tuple[bool, bool, bool]]] = []
    full = (True, True, True)
    base = cfg.with_overrides(strategy="feal")
    if axis == "uncertainty_components":
        for row in COMPONENT_ROWS:
            tag = "epi=%d;aleG=%d;aleL=%d" % tuple(int(b) for b in row)
            variants.append((tag, base, row))
    elif axis == "tau":
        for tau in TAU_SWEEP:
            variants.append((f"tau={tau}", base.with_overrides(tau=tau), full))
    elif axis == "n":
        for n in N_SWEEP:
            variants.append((f"n={n}", base.with_overrides(min_neighbors=n), full))
    elif axis == "lambda":
        for lam in LAMBDA_SWEEP:
            variants.append((f"lambda={lam}", base.with_overrides(lam=lam), full))
    else:  # loss: evidential objective vs plain task loss
        variants.append(("loss=evidential", base, full))
        variants.append(("loss=task_only", base.with_overrides(lam=0.0), full))

    rows = []
    for tag, vcfg, components in variants:
        for seed in cfg.seeds:
            res = run_seed(vcfg, seed, components=components)
            for m in res.metrics_rows:
                rows.append({"axis": axis, "variant": tag, **m})
    _write_csv(
        os.path.join(out, "comparison.csv"),
        cfg,
        ["axis", "variant", "seed", "fal_round", "labeled_total", "strategy", "global_acc", "global_bma"],
        rows,
    )
    return out


def emit_reports(run_dir: str) -> list[str]:
    """Aggregate a completed run directory into summary files."""
    cfg_path = os.path.join(run_dir, "config.txt")
    metrics_path = os.path.join(run_dir, "metrics.csv")
    missing = [p for p in (cfg_path, metrics_path) if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(f"run directory incomplete, missing: {missing}")
    cfg = ExperimentConfig.from_file(cfg_path)
    expected_hash = cfg.config_hash()

    produced = []
    all_rows = {}
    for name in ("metrics.csv", "rounds.csv", "selection_audit.csv"):
        path = os.path.join(run_dir, name)
        if not os.path.exists(path):
            continue
        file_hash, _, rows = _read_csv(path)
        if file_hash != expected_hash:
            raise ValueError(
                f"{name} carries config hash {file_hash}, expected {expected_hash}"
            )
        all_rows[name] = rows

    # mean/std of the global metrics across seeds, one row per FAL round
    by_round: dict[int, list[dict]] = {}
    for row in all_rows["metrics.csv"]:
        by_round.setdefault(int(row["fal_round"]), []).append(row)
    summary_rows = []
    for fal_round in sorted(by_round):
        rows = by_round[fal_round]
        accs = np.array([float(r["global_acc"]) for r in rows])
        bmas = np.array([float(r["global_bma"]) for r in rows])
        summary_rows.append(
            {
                "fal_round": fal_round,
                "n_seeds": len(rows),
                "labeled_total": rows[0]["labeled_total"],
                "strategy": rows[0]["strategy"],
                "acc_mean": float(accs.mean()),
                "acc_std": float(accs.std(ddof=1)) if len(rows) > 1 else 0.0,
                "bma_mean": float(bmas.mean()),
                "bma_std": float(bmas.std(ddof=1)) if len(rows) > 1 else 0.0,
            }
        )
    summary_path = os.path.join(run_dir, "summary.csv")
    _write_csv(
        summary_path,
        cfg,
        ["fal_round", "n_seeds", "labeled_total", "strategy", "acc_mean", "acc_std", "bma_mean", "bma_std"],
        summary_rows,
    )
    produced.append(summary_path)

    # domain-shift matrix and simplex grid from the first seed's final model
    seed = cfg.seeds[0]
    model_path = os.path.join(run_dir, f"model_seed{seed}.txt")
    if os.path.exists(model_path):
        model = load_params(model_path)
        partitions = generate_multidomain(
            cfg.n_clients,
            cfg.n_classes,
            cfg.dim,
            cfg.shift_strength,
            seed,
            samples_per_client=cfg.samples_per_client,
        )
        mat = domain_shift_report(partitions, model)
        shift_rows = [
            {"client_i": i, "client_j": j, "p_value": float(mat[i, j])}
            for i in range(mat.shape[0])
            for j in range(mat.shape[1])
        ]
        shift_path = os.path.join(run_dir, "domain_shift.csv")
        _write_csv(shift_path, cfg, ["client_i", "client_j", "p_value"], shift_rows)
        produced.append(shift_path)

        if cfg.n_classes == 3:
            x0 = partitions[0].test_features[0]
            alpha = alpha_from_logits(forward(model, x0).logits)
            grid = dirichlet_density_grid(alpha, resolution=60)
            grid_rows = [
                {"b1": b1, "b2": b2, "b3": b3, "density": dens}
                for (b1, b2, b3), dens in grid
            ]
            grid_path = os.path.join(run_dir, "simplex_grid.csv")
            _write_csv(grid_path, cfg, ["b1", "b2", "b3", "density"], grid_rows)
            produced.append(grid_path)

    return produced
